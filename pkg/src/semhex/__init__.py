"""Matrix-free spectral element solver for elliptic problems on hexahedral meshes."""
__version__ = "0.1.0"
