"""Dense scale network (DSNet) for crowd counting."""
__version__ = "0.1.0"
