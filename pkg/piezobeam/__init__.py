"""Semi-discretized magnetizable piezoelectric beam: spectra, filtering and energy decay."""

__version__ = "0.1.0"
