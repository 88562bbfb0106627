from cslfisher.models.model import Model
from cslfisher.models.sweep_result import SweepResult
from cslfisher.models.sweeps import SweepRunner
