from cslfisher.main import CslFisher
