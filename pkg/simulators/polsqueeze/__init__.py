"""PolSqueeze: polarisation squeezing of ultrashort pulses in birefringent fibre"""
__version__ = "1.0.0"
