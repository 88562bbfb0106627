"""
Sweep configuration files.

Line-oriented `key = value` pairs, `#` starts a comment. All physical quantities are plain SI numbers.
"""
import logging
import math
from dataclasses import dataclass, fields, replace
from typing import Dict, Iterable, Mapping, Optional, Tuple

from cslfisher.models.optomech_dynamics import InvalidParameter, SystemParams

logger = logging.getLogger(__name__)

AXES = {
    'gamma': 'm^3/s',
    'delta_detuning': 'rad/s',
    'mass': 'kg',
    'omega_m': 'rad/s',
    'temperature': 'K',
    'tau': '1',
    'squeeze_delta': 'quanta',
}
AXIS_FIELDS = {'delta_detuning': 'delta', 'mass': 'mass', 'omega_m': 'omega_m', 'temperature': 'temperature'}

SYSTEM_OUTPUTS = ('qfi_mech', 'qfi_opt', 'fi_homodyne', 'fi_heterodyne', 'snr_mech', 'snr_opt', 'snr_homodyne',
                  'hybrid_fi', 'hybrid_fi_reduced', 'hybrid_qfi', 'tau_opt', 'qfi_mech_closed', 'n_csl')
SQUEEZE_OUTPUTS = ('qfi_unsqueezed', 'qfi_squeezed', 'fi_unsqueezed', 'fi_squeezed')

SYSTEM_KEYS = tuple(f.name for f in fields(SystemParams))
NUMBER_KEYS = SYSTEM_KEYS + ('quality_factor', 'detuning_ratio', 'min', 'max', 'points', 'theta', 'gamma',
                             'lambda_per_gamma', 'tau', 'qubit_theta', 'qubit_phi', 'squeeze_n_th', 'squeeze_s')
TEXT_KEYS = ('sweep_axis', 'scale', 'outputs', 'squeeze_ordering', 'label')
SWEEP_KEYS = ('sweep_axis', 'min', 'max', 'points')

DEFAULT_QUALITY_FACTOR = 1e5
DEFAULT_DETUNING_RATIO = 5.0


@dataclass(frozen=True)
class SweepConfig:
    base: SystemParams
    sweep_axis: str = 'gamma'
    scale: str = 'linear'
    min: float = 0.0
    max: float = 1.0
    points: int = 2
    outputs: Tuple[str, ...] = ()
    theta: Optional[float] = None
    gamma: float = 1e-28
    lambda_per_gamma: Optional[float] = None
    tau: Optional[float] = None
    qubit_theta: float = 0.0
    qubit_phi: float = 0.0
    squeeze_n_th: float = 100.0
    squeeze_s: float = 2.95
    squeeze_ordering: str = 'before'
    label: str = ''
    quality_factor: Optional[float] = None
    detuning_ratio: Optional[float] = None

    @property
    def axis_unit(self) -> str:
        return AXES[self.sweep_axis]

    def params_at(self, value: float) -> SystemParams:
        """
        System parameters at one axis value. Derived damping and detuning follow omega_m and kappa.
        """
        field_name = AXIS_FIELDS.get(self.sweep_axis)
        params = replace(self.base, **{field_name: value}) if field_name else self.base
        if self.quality_factor:
            params = replace(params, gamma_m=params.omega_m / self.quality_factor)
        if self.detuning_ratio and self.sweep_axis != 'delta_detuning':
            params = replace(params, delta=self.detuning_ratio * params.kappa)
        return params


def parse_config(text: str, overrides: Iterable[str] = (), defaults: Mapping[str, str] = None,
                 require_sweep: bool = True) -> SweepConfig:
    """
    Parses and validates a sweep configuration.

    Args:
        text: Config file contents.
        overrides: `key=value` strings applied after the file. They may repeat file keys.
        defaults: Values used for keys the file and overrides leave out.
        require_sweep: Whether sweep_axis, min, max and points must be present.

    Returns:
        SweepConfig
    """
    pairs = dict(defaults or {})
    pairs.update(read_pairs(text))
    for override in overrides:
        key, value = _split_pair(override, 0)
        pairs[key] = value
    return build_config(pairs, require_sweep)


def read_pairs(text: str) -> Dict[str, str]:
    pairs = {}
    for line_number, raw in enumerate(text.splitlines(), start=1):
        line = raw.split('#', 1)[0].strip()
        if not line:
            continue
        key, value = _split_pair(line, line_number)
        if key in pairs:
            raise ParseError(line_number, f'duplicated key {key}')
        pairs[key] = value
    return pairs


def build_config(pairs: Mapping[str, str], require_sweep: bool = True) -> SweepConfig:
    for key in pairs:
        if key not in NUMBER_KEYS and key not in TEXT_KEYS:
            raise ValidationError(key, 'unknown key')
    if require_sweep:
        for key in SWEEP_KEYS:
            if key not in pairs:
                raise ValidationError(key, 'required key is missing')

    numbers = {key: _number(key, value) for key, value in pairs.items() if key in NUMBER_KEYS}
    system = {key: numbers[key] for key in SYSTEM_KEYS if key in numbers}
    quality_factor = None
    detuning_ratio = None
    if 'gamma_m' not in system:
        quality_factor = numbers.get('quality_factor', DEFAULT_QUALITY_FACTOR)
        if not quality_factor > 0:
            raise ValidationError('quality_factor', 'must be positive')
    if 'delta' not in system:
        detuning_ratio = numbers.get('detuning_ratio', DEFAULT_DETUNING_RATIO)
    try:
        base = SystemParams(**system)
        if quality_factor:
            base = replace(base, gamma_m=base.omega_m / quality_factor)
        if detuning_ratio is not None:
            base = replace(base, delta=detuning_ratio * base.kappa)
    except InvalidParameter as e:
        raise ValidationError(e.name, e.reason)

    axis = pairs.get('sweep_axis', 'gamma').strip()
    if axis not in AXES:
        raise ValidationError('sweep_axis', f'must be one of {", ".join(AXES)}')
    scale = pairs.get('scale', 'linear').strip()
    if scale not in ('linear', 'log10'):
        raise ValidationError('scale', 'must be linear or log10')

    points = numbers.get('points', 2.0)
    if points != int(points) or points < 2:
        raise ValidationError('points', 'must be an integer of at least 2')
    minimum = numbers.get('min', 0.0)
    maximum = numbers.get('max', 1.0)
    if require_sweep and not minimum < maximum:
        raise ValidationError('max', 'must be greater than min')

    outputs = tuple(x.strip() for x in pairs.get('outputs', '').split(',') if x.strip())
    allowed = SQUEEZE_OUTPUTS if axis == 'squeeze_delta' else SYSTEM_OUTPUTS
    for name in outputs:
        if name not in allowed:
            raise ValidationError('outputs', f'{name} is not available for the {axis} axis')
    if len(set(outputs)) != len(outputs):
        raise ValidationError('outputs', 'outputs are listed twice')
    if {'fi_homodyne', 'snr_homodyne'} & set(outputs) and 'theta' not in numbers:
        raise ValidationError('theta', 'homodyne outputs need a theta value')

    ordering = pairs.get('squeeze_ordering', 'before').strip()
    if ordering not in ('before', 'after'):
        raise ValidationError('squeeze_ordering', 'must be before or after')
    for key in ('gamma', 'squeeze_n_th'):
        if numbers.get(key, 0.0) < 0:
            raise ValidationError(key, 'must be nonnegative')
    for key in ('lambda_per_gamma', 'tau'):
        if key in numbers and not numbers[key] > 0:
            raise ValidationError(key, 'must be positive')
    if not 0 <= numbers.get('qubit_theta', 0.0) <= math.pi:
        raise ValidationError('qubit_theta', 'must lie in [0, pi]')
    if not 0 <= numbers.get('qubit_phi', 0.0) < 2 * math.pi:
        raise ValidationError('qubit_phi', 'must lie in [0, 2 pi)')

    return SweepConfig(base=base, sweep_axis=axis, scale=scale, min=minimum, max=maximum, points=int(points),
                       outputs=outputs, theta=numbers.get('theta'), gamma=numbers.get('gamma', 1e-28),
                       lambda_per_gamma=numbers.get('lambda_per_gamma'), tau=numbers.get('tau'),
                       qubit_theta=numbers.get('qubit_theta', 0.0), qubit_phi=numbers.get('qubit_phi', 0.0),
                       squeeze_n_th=numbers.get('squeeze_n_th', 100.0), squeeze_s=numbers.get('squeeze_s', 2.95),
                       squeeze_ordering=ordering, label=pairs.get('label', '').strip(),
                       quality_factor=quality_factor, detuning_ratio=detuning_ratio)


def _split_pair(line: str, line_number: int) -> Tuple[str, str]:
    if '=' not in line:
        raise ParseError(line_number, f'expected key = value, got {line!r}')
    key, value = line.split('=', 1)
    key = key.strip()
    if not key:
        raise ParseError(line_number, 'missing key before =')
    return key, value.strip()


def _number(key: str, value: str) -> float:
    try:
        number = float(value)
    except ValueError:
        raise ValidationError(key, f'{value!r} is not a number')
    if not math.isfinite(number):
        raise ValidationError(key, f'{value!r} is not finite')
    return number


class ParseError(Exception):
    """Raised for malformed config lines"""

    def __init__(self, line_number, message):
        self.line_number = line_number
        self.message = f'line {line_number}: {message}'
        super().__init__(self.message)


class ValidationError(Exception):
    """Raised when a config value is missing or invalid"""

    def __init__(self, key, message):
        self.key = key
        self.message = f'{key}: {message}'
        super().__init__(self.message)
