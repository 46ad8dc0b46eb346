"""Neural-network constitutive models for 1D inelastic materials and their analytic references."""

__version__ = "0.1.0"
