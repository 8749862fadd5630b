"""Offline plots over qmflab CSV files; never recomputes spectra or ranks."""

__version__ = "0.1.0"
