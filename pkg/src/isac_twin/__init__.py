"""Two-RSU ISAC vehicular digital twin: tracking, PCRB-constrained beamforming and assignment."""

__version__ = "0.1.0"
