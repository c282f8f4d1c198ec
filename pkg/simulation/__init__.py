# Package marker for path sampling, Pickands and Monte Carlo modules.
