"""Version information for dd-sounder package."""

__version__ = "0.3.0"
__author__ = "DataTeamSix"
__email__ = "research@dt6.io"
__license__ = "MIT"
__description__ = "Delay-Doppler channel sounding toolkit: OTFS sounding waveforms, fractional delay/Doppler channel emulation, CSF estimation, and channel characterization"
