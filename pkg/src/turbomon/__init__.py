"""Unsupervised anomaly detection for multivariate sensor time series.

Pipeline: autoencoder + Local Outlier Factor training-set refinement, an
LSTM variational autoencoder projecting windows into a 3-D phase space
(latent mean plus reconstruction error), and an EM-fitted Gaussian mixture
turning phase points into anomaly verdicts.
"""

__version__ = "0.1.0"
