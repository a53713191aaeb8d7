from .estimation_service import EstimationService, build_problem
from .simulation_service import SimulationService
from .verification_service import VerificationService

__all__ = ['EstimationService', 'SimulationService', 'VerificationService', 'build_problem']
