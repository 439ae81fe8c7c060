"""two-truths - spectral graph clustering GMM o {LSE, ASE} and its analysis tools"""

__version__ = "1.0.1"
__license__ = "MIT"
