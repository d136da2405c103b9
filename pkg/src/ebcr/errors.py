"""Exception types shared across the package."""


class NumericalError(RuntimeError):
    """An iterative or numerical routine failed (divergence, singularity,
    quadrature that will not refine, degenerate density, ...).

    Input-validation problems raise ``ValueError`` instead; the CLI maps
    ``ValueError`` to exit code 1 and ``NumericalError`` to exit code 2.
    """
