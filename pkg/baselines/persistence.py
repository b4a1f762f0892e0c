from .base import Baseline


class Persistence(Baseline):
    """Next year equals this year."""
    def __init__(self):
        super().__init__("Persistence")

    def fit(self, years, values):
        pass

    def predict_next(self, history, year):
        return float(history[-1])
