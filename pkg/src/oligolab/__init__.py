"""DNA-storage coding lab: encode, simulate a sequencing channel, decode."""

__version__ = "0.1.0"
