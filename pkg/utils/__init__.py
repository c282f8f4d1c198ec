# Package marker for utility modules.
