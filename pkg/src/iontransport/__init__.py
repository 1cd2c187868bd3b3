"""Energy transport through trapped-ion quantum magnets coupled to laser-cooled phonon reservoirs."""

__version__ = "0.1.0"
