"""
CSL diffusion rate, the rescaled parameter Lambda and thermal occupations.
"""
import logging
import math
import struct
import warnings
from dataclasses import dataclass
from functools import lru_cache
from typing import BinaryIO, TYPE_CHECKING

import numpy as np
from scipy import constants
from scipy.integrate import IntegrationWarning, quad
from scipy.ndimage import correlate1d, gaussian_filter
from scipy.special import spherical_jn

if TYPE_CHECKING:
    from cslfisher.models.optomech_dynamics import SystemParams

logger = logging.getLogger(__name__)

HBAR = constants.hbar
K_B = constants.k
AMU = constants.physical_constants['atomic mass constant'][0]

# The Gaussian factor exp(-u^2) is below 1e-62 past this point.
U_MAX = 12.0
QUAD_EPSREL = 1e-10
QUAD_TOLERANCE = 1e-8

_HEADER = struct.Struct('<3Qd')
_FD_STENCIL = np.array([1.0, -8.0, 0.0, 8.0, -1.0]) / 12.0


@dataclass(frozen=True)
class SphereGeometry:
    """
    Homogeneous sphere.

    Args:
        radius: Sphere radius in m.
        mass: Sphere mass in kg.
    """
    radius: float
    mass: float

    def __post_init__(self):
        if not (self.radius > 0 and self.mass > 0):
            raise InvalidGrid(f'Sphere radius and mass must be positive, got {self.radius}, {self.mass}')

    @classmethod
    def from_mass(cls, mass: float, density: float) -> 'SphereGeometry':
        radius = (3 * mass / (4 * math.pi * density)) ** (1 / 3)
        return cls(radius=radius, mass=mass)

    @property
    def density(self) -> float:
        return self.mass / (4 / 3 * math.pi * self.radius ** 3)


@dataclass(frozen=True)
class DensityGrid:
    """
    Voxelized mass density.

    Args:
        voxel_edge: Voxel edge in m.
        values: 3D array of densities in kg/m^3.
    """
    voxel_edge: float
    values: np.ndarray

    def __post_init__(self):
        values = np.asarray(self.values, dtype=float)
        if values.ndim != 3:
            raise InvalidGrid(f'Density grid must be 3D, got {values.ndim} dimensions')
        if not self.voxel_edge > 0:
            raise InvalidGrid(f'Voxel edge must be positive, got {self.voxel_edge}')
        if (values < 0).any():
            raise InvalidGrid('Density grid contains negative values')
        object.__setattr__(self, 'values', values)

    @property
    def total_mass(self) -> float:
        return float(self.values.sum() * self.voxel_edge ** 3)

    def write(self, stream: BinaryIO) -> None:
        """
        Writes the grid as three little-endian uint64 dimensions, a float64 voxel edge and row-major float64 values.
        """
        stream.write(_HEADER.pack(*self.values.shape, self.voxel_edge))
        stream.write(np.ascontiguousarray(self.values, dtype='<f8').tobytes(order='C'))

    @classmethod
    def read(cls, stream: BinaryIO) -> 'DensityGrid':
        header = stream.read(_HEADER.size)
        if len(header) != _HEADER.size:
            raise InvalidGrid('Truncated density grid header')
        nx, ny, nz, edge = _HEADER.unpack(header)
        count = nx * ny * nz
        payload = stream.read(count * 8)
        if len(payload) != count * 8:
            raise InvalidGrid(f'Expected {count} density values, got {len(payload) // 8}')
        values = np.frombuffer(payload, dtype='<f8').reshape((nx, ny, nz)).astype(float)
        return cls(voxel_edge=edge, values=values)


def thermal_occupation(omega_m: float, T: float) -> float:
    """
    Bose-Einstein occupation of a mode at frequency omega_m (rad/s) and temperature T (K).
    """
    if T < 0:
        raise ValueError(f'Temperature must be nonnegative, got {T}')
    if T == 0:
        return 0.0
    return 1.0 / math.expm1(HBAR * omega_m / (K_B * T))


def n_csl(n_bar: float, Lambda: float, gamma_m: float) -> float:
    """
    Thermal occupation equivalent to the combined thermal and CSL heating.
    """
    return n_bar + Lambda / (2 * gamma_m)


def eta_sphere(geom: SphereGeometry, r_c: float, gamma: float) -> float:
    """
    CSL diffusion rate of a homogeneous sphere.

    Uses the momentum-space form eta = gamma / m0^2 * Int d^3k / (2 pi)^3 exp(-k^2 r_c^2) k^2 / 3 |rho(k)|^2, which for
    a sphere reduces to a radial integral in u = k r_c.

    Args:
        geom: Sphere geometry.
        r_c: CSL correlation length in m.
        gamma: CSL coupling in m^3/s.

    Returns:
        eta in m^-2 s^-1.
    """
    if not r_c > 0:
        raise ValueError(f'r_c must be positive, got {r_c}')
    if gamma < 0:
        raise ValueError(f'gamma must be nonnegative, got {gamma}')
    if gamma == 0:
        return 0.0
    return gamma * _eta_sphere_per_gamma(geom.radius, geom.mass, r_c)


def lambda_per_gamma(p: 'SystemParams') -> float:
    """
    dLambda/dgamma for the sphere implied by the mass and material density, in s^-1 per m^3/s.
    """
    geom = SphereGeometry.from_mass(p.mass, p.material_density)
    return HBAR * _eta_sphere_per_gamma(geom.radius, geom.mass, p.r_c) / (p.mass * p.omega_m)


def lambda_from_gamma(p: 'SystemParams', gamma: float) -> float:
    if gamma < 0:
        raise ValueError(f'gamma must be nonnegative, got {gamma}')
    return gamma * lambda_per_gamma(p)


def crossover_gamma(p: 'SystemParams') -> float:
    """
    Coupling at which the CSL heating equals the thermal heating, Lambda = 2 gamma_m n_bar.
    """
    n_bar = thermal_occupation(p.omega_m, p.temperature)
    return 2 * p.gamma_m * n_bar / lambda_per_gamma(p)


def rasterize_sphere(geom: SphereGeometry, voxel_edge: float, padding: int = 3) -> DensityGrid:
    """
    Anti-aliased voxelization of a sphere centered in the grid.

    Each voxel receives the sphere density weighted by the fraction of a radial ramp of one voxel width, then the grid
    is rescaled so the total mass matches the sphere.

    Args:
        geom: Sphere to rasterize.
        voxel_edge: Voxel edge in m.
        padding: Empty voxels on each side beyond the sphere.

    Returns:
        DensityGrid
    """
    half = int(math.ceil(geom.radius / voxel_edge + 0.5)) + padding
    axis = (np.arange(2 * half + 1) - half) * voxel_edge
    x, y, z = np.meshgrid(axis, axis, axis, indexing='ij')
    r = np.sqrt(x ** 2 + y ** 2 + z ** 2)
    fill = np.clip((geom.radius - r) / voxel_edge + 0.5, 0.0, 1.0)
    values = fill * geom.density
    values *= geom.mass / (values.sum() * voxel_edge ** 3)
    return DensityGrid(voxel_edge=voxel_edge, values=values)


def eta_grid(grid: DensityGrid, r_c: float, gamma: float, periodic: bool = False) -> float:
    """
    Direct real-space evaluation of the CSL diffusion rate on a voxel grid.

    Gradients use a fourth-order central stencil; the pair kernel exp(-|r - r'|^2 / 4 r_c^2) / (2 sqrt(pi) r_c)^3 is a
    normalized Gaussian of width sqrt(2) r_c and is applied as a separable filter.

    Args:
        grid: Mass density on a cubic voxel grid.
        r_c: CSL correlation length in m.
        gamma: CSL coupling in m^3/s.
        periodic: Treat the grid as one period of an infinite lattice. Otherwise the density is zero outside.

    Returns:
        eta in m^-2 s^-1.
    """
    h = grid.voxel_edge
    if h > r_c:
        raise ResolutionTooCoarse(f'Voxel edge {h} exceeds r_c {r_c}')
    if h > r_c / 4:
        logger.warning(f'Voxel edge {h:.3g} m is coarser than r_c / 4; eta_grid will be inaccurate')

    mode = 'wrap' if periodic else 'constant'
    sigma = math.sqrt(2) * r_c / h
    total = 0.0
    for axis in range(3):
        grad = correlate1d(grid.values, _FD_STENCIL / h, axis=axis, mode=mode)
        smoothed = gaussian_filter(grad, sigma=sigma, mode=mode)
        total += float(np.sum(grad * smoothed))
    return gamma / (3 * AMU ** 2) * total * h ** 3


@lru_cache(maxsize=256)
def _eta_sphere_per_gamma(radius: float, mass: float, r_c: float) -> float:
    ratio = radius / r_c
    # Chunks span ten oscillations of the form factor.
    width = min(20 * math.pi / ratio, U_MAX)
    edges = np.append(np.arange(0.0, U_MAX, width), U_MAX)

    def integrand(u):
        f = _form_factor(u * ratio)
        return u ** 4 * math.exp(-u * u) * f * f

    total = 0.0
    abserr = 0.0
    with warnings.catch_warnings():
        warnings.simplefilter('ignore', IntegrationWarning)
        for lo, hi in zip(edges[:-1], edges[1:]):
            value, err = quad(integrand, lo, hi, epsabs=0.0, epsrel=QUAD_EPSREL, limit=200)
            total += value
            abserr += err
    logger.debug(f'eta quadrature over {len(edges) - 1} chunks, R/r_c = {ratio:.4g}, abserr = {abserr:.3g}')
    if not total > 0 or abserr > QUAD_TOLERANCE * total:
        raise QuadratureFailure(f'Radial quadrature did not converge for R/r_c = {ratio:.4g} '
                                f'(value {total:.6g}, error {abserr:.3g})')
    return mass ** 2 / (6 * math.pi ** 2 * AMU ** 2 * r_c ** 5) * total


def _form_factor(x: float) -> float:
    """
    3 j1(x) / x, the normalized Fourier transform of a homogeneous ball.
    """
    if x < 1e-3:
        x2 = x * x
        return 1.0 - x2 / 10 + x2 * x2 / 280
    return 3.0 * float(spherical_jn(1, x)) / x


class QuadratureFailure(Exception):
    pass


class ResolutionTooCoarse(Exception):
    pass


class InvalidGrid(Exception):
    pass
