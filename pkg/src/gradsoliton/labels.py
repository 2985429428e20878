from enum import Enum


class ModelClass(str, Enum):
    """Classification labels; values are the strings written to reports."""

    FLAT = "flat ℝⁿ"
    SPHERE_EINSTEIN = "Sⁿ-Einstein"
    SPHERE_SPLIT = "S^{n−1}×ℝ-split"
    HYPERBOLIC_EINSTEIN = "Hⁿ-Einstein"
    HYPERBOLIC_SPLIT = "H^{n−1}×ℝ-split"
    EINSTEIN_OTHER = "Einstein-other"
    RIGID = "N×ℝᵏ-rigid"
    INCONCLUSIVE = "inconclusive"

    def __str__(self) -> str:
        return self.value
