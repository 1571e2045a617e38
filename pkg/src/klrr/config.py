"""Solver hyperparameters."""
from dataclasses import asdict, dataclass, field, replace

from .errors import InvalidArgumentError
from .kernel import KernelSpec


@dataclass(frozen=True)
class SolverConfig:
    """Hyperparameters of the alternating solver.

    ``column_model`` selects how each column subproblem is built:

    * ``"exact"`` -- the column objective is the exact restriction of the
      full objective to that column (off-diagonal Gram residuals count twice,
      since ``a_i`` enters both row and column ``i``), and the IRLS weights
      come from the tight tangent majoriser of the smoothed square root
      (the polynomial kernel distance is kept exact rather than frozen into
      a quadratic).  Every BCD step then provably lowers the smoothed
      objective.
    * ``"literal"`` -- literal per-column sum ``alpha/2 sum_j (m_ij - k_ij)^2``
      with weights ``alpha/(4 gamma beta p)`` (Gaussian) and
      ``alpha/(4 d delta)`` with the frozen-``tau`` quadratic (polynomial).
      Descent is not guaranteed; rejected sweeps are dropped.
    """

    lam: float = 1.0
    rho: float = 10.0
    kernel: KernelSpec = field(default_factory=lambda: KernelSpec.gaussian(1.0))
    smooth_mu: float = 1e-4
    tol_outer: float = 1e-6
    max_outer: int = 100
    tol_inner: float = 1e-8
    max_inner: int = 200
    tol_irls: float = 1e-8
    max_irls: int = 20
    init_mode: str = "copy_x"
    bcd_mode: str = "sequential"
    column_model: str = "exact"
    n_workers: int = 1
    backend: str | None = None

    def __post_init__(self):
        for name in ("lam", "rho", "smooth_mu", "tol_outer", "tol_inner", "tol_irls"):
            v = getattr(self, name)
            if not v > 0:
                raise InvalidArgumentError(f"{name} must be > 0, got {v}")
        for name in ("max_inner", "max_irls"):
            if getattr(self, name) < 1:
                raise InvalidArgumentError(f"{name} must be >= 1")
        if self.max_outer < 0:
            raise InvalidArgumentError("max_outer must be >= 0")
        if self.init_mode not in ("copy_x", "zero"):
            raise InvalidArgumentError(f"init_mode must be 'copy_x' or 'zero', got {self.init_mode!r}")
        if self.bcd_mode not in ("sequential", "jacobi"):
            raise InvalidArgumentError(f"bcd_mode must be 'sequential' or 'jacobi', got {self.bcd_mode!r}")
        if self.column_model not in ("exact", "literal"):
            raise InvalidArgumentError(f"column_model must be 'exact' or 'literal', got {self.column_model!r}")

    @property
    def alpha(self):
        return self.rho / self.lam

    def replace(self, **changes):
        return replace(self, **changes)

    def to_dict(self):
        d = asdict(self)
        d["kernel"] = self.kernel.to_dict()
        d["alpha"] = self.alpha
        return d
