"""Continuum-deformation formation control: certificate, guidance, simulated
vehicles and network, constraint monitoring."""

from .formation import FormationSpec, HomogeneousTransform, Vec2

__all__ = ["FormationSpec", "HomogeneousTransform", "Vec2"]
