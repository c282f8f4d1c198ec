# Package marker for field description and covariance modules.
