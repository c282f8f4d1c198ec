# Package marker for run output writers.
