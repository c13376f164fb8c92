# fastrpe: FFT-accelerated kernelized attention with relative positional encoding
