"""Infrastructure adapters: files, channels, codecs and the simulated cluster."""
