"""Battery-free underwater inference node: DSP front end, tiny CNN,
int16 conversion, energy accounting and an FM0 backscatter uplink."""

__version__ = "0.1.0"
