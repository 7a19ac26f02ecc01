"""Phase-space grid: coordinates, index maps, and discrete calculus.

The grid is periodic in position x and truncated in velocity v.  Position
points are x_i = (i-1)*dx for i = 1..n_x with dx = x_max/n_x (the right
endpoint x_max aliases x_1).  Velocity points are v_j = -v_max + (j-1)*dv
for j = 1..n_v with dv = 2*v_max/(n_v - 1), so v_1 = -v_max and
v_{n_v} = +v_max.  n_v must be even so that v = 0 is never a grid point
and the velocity grid is symmetric.

All public index arguments are 1-based.  A grid function is either an
(n_x, n_v) matrix f with f[i-1, j-1] = f(x_i, v_j) or its row-major
flattening u with u[n-1] = f(x_i, v_j), n = (i-1)*n_v + j.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

__all__ = ["GridSpec"]


@dataclass(frozen=True)
class GridSpec:
    """Immutable phase-space grid description.

    Parameters
    ----------
    n_x : int
        Number of position points, >= 1.
    n_v : int
        Number of velocity points, even and >= 2.
    x_max : float
        Position-domain length, > 0.
    v_max : float
        Velocity cutoff, > 0; the grid spans [-v_max, +v_max].

    The spacings dx, dv are computed once at construction and stored.
    """

    n_x: int
    n_v: int
    x_max: float
    v_max: float
    dx: float = 0.0
    dv: float = 0.0

    def __post_init__(self) -> None:
        if self.n_x < 1:
            raise ValueError(f"n_x must be >= 1, got {self.n_x}")
        if self.n_v < 2:
            raise ValueError(f"n_v must be >= 2, got {self.n_v}")
        if self.n_v % 2 != 0:
            raise ValueError(f"n_v must be even, got {self.n_v}")
        if not (self.x_max > 0):
            raise ValueError(f"x_max must be positive, got {self.x_max}")
        if not (self.v_max > 0):
            raise ValueError(f"v_max must be positive, got {self.v_max}")
        object.__setattr__(self, "dx", self.x_max / self.n_x)
        object.__setattr__(self, "dv", 2.0 * self.v_max / (self.n_v - 1))

    # ------------------------------------------------------------------
    # coordinates

    @property
    def n_points(self) -> int:
        """Total number of phase-space points N = n_x * n_v."""
        return self.n_x * self.n_v

    def x_coord(self, i: int) -> float:
        """Position of grid line i (1-based), x_i = (i-1)*dx."""
        self._check_i(i)
        return (i - 1) * self.dx

    def v_coord(self, j: int) -> float:
        """Velocity of grid line j (1-based), v_j = -v_max + (j-1)*dv."""
        self._check_j(j)
        return -self.v_max + (j - 1) * self.dv

    def x_coords(self) -> np.ndarray:
        """All positions as an (n_x,) array."""
        return np.arange(self.n_x, dtype=float) * self.dx

    def v_coords(self) -> np.ndarray:
        """All velocities as an (n_v,) array."""
        return -self.v_max + np.arange(self.n_v, dtype=float) * self.dv

    # ------------------------------------------------------------------
    # index maps

    def flatten_index(self, i: int, j: int) -> int:
        """Row-major flattening n = (i-1)*n_v + j, all indices 1-based."""
        self._check_i(i)
        self._check_j(j)
        return (i - 1) * self.n_v + j

    def unflatten_index(self, n: int) -> tuple[int, int]:
        """Inverse of flatten_index: n -> (i, j) with 1 <= n <= n_x*n_v."""
        if not 1 <= n <= self.n_points:
            raise ValueError(f"flat index {n} out of range 1..{self.n_points}")
        i = math.ceil(n / self.n_v)
        j = n - self.n_v * (i - 1)
        return i, j

    def pair_index(self, a: int, b: int) -> int:
        """Index of (a, b) in the flattened tensor square, N*(a-1) + b.

        Used to address columns of an operator acting on u (x) u: entry
        (a, b) of the outer product sits at column pair_index(a, b).
        """
        big_n = self.n_points
        if not 1 <= a <= big_n:
            raise ValueError(f"pair index a={a} out of range 1..{big_n}")
        if not 1 <= b <= big_n:
            raise ValueError(f"pair index b={b} out of range 1..{big_n}")
        return big_n * (a - 1) + b

    # ------------------------------------------------------------------
    # discrete calculus

    def ddx(self, f: np.ndarray, i: int, j: int) -> float:
        """Central x-derivative at (i, j) with periodic wrap in i.

        (f_{i+1,j} - f_{i-1,j}) / (2*dx), indices taken mod n_x so that
        i = 1 uses f_{n_x, j} on the left and i = n_x uses f_{1, j} on
        the right.
        """
        f = self._check_f(f)
        self._check_i(i)
        self._check_j(j)
        up = i % self.n_x + 1
        dn = (i - 2) % self.n_x + 1
        return (f[up - 1, j - 1] - f[dn - 1, j - 1]) / (2.0 * self.dx)

    def ddv(self, f: np.ndarray, i: int, j: int) -> float:
        """Central v-derivative at (i, j); f is zero outside the v range.

        (f_{i,j+1} - f_{i,j-1}) / (2*dv) with the out-of-range neighbor
        dropped at j = 1 and j = n_v (distribution vanishes beyond the
        velocity cutoff).
        """
        f = self._check_f(f)
        self._check_i(i)
        self._check_j(j)
        hi = f[i - 1, j] if j < self.n_v else 0.0
        lo = f[i - 1, j - 2] if j > 1 else 0.0
        return (hi - lo) / (2.0 * self.dv)

    def cumulative_trapz(self, f: np.ndarray, i: int) -> float:
        """Trapezoid-rule integral of f over [0, x_i] x [-v_max, v_max].

        Zero at i = 1 (empty x-interval).  For i >= 2 the x-rule weights
        the first and last x-lines by 1/2 and interior lines by 1; the
        v-sum is the plain row sum (velocity endpoints carry the same
        weight as the interior, matching the operator entry maps built
        from this rule).  i = n_x + 1 is admitted and closes the period:
        line n_x + 1 aliases line 1.
        """
        f = self._check_f(f)
        if not 1 <= i <= self.n_x + 1:
            raise ValueError(f"i={i} out of range 1..{self.n_x + 1}")
        if i == 1:
            return 0.0
        row_sums = f.sum(axis=1)
        first = row_sums[0]
        last = row_sums[0] if i == self.n_x + 1 else row_sums[i - 1]
        interior = row_sums[1 : i - 1].sum()
        return 0.5 * self.dx * self.dv * (first + last + 2.0 * interior)

    def velocity_moment(self, f: np.ndarray, i: int) -> float:
        """First velocity moment dv * sum_j v_j f_{i,j} at x-line i."""
        f = self._check_f(f)
        self._check_i(i)
        return self.dv * float(np.dot(self.v_coords(), f[i - 1, :]))

    # ------------------------------------------------------------------
    # helpers

    def _check_i(self, i: int) -> None:
        if not 1 <= i <= self.n_x:
            raise ValueError(f"i={i} out of range 1..{self.n_x}")

    def _check_j(self, j: int) -> None:
        if not 1 <= j <= self.n_v:
            raise ValueError(f"j={j} out of range 1..{self.n_v}")

    def _check_f(self, f: np.ndarray) -> np.ndarray:
        f = np.asarray(f, dtype=float)
        if f.shape != (self.n_x, self.n_v):
            raise ValueError(
                f"grid function shape {f.shape} != ({self.n_x}, {self.n_v})"
            )
        return f
