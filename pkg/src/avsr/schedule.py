from __future__ import annotations

from dataclasses import dataclass


@dataclass
class Newbob:
    """Halve-on-plateau learning-rate rule driven by cross-validation accuracy.

    Accuracies are percentages; thresholds are in percentage points. Once the
    epoch-to-epoch gain drops below ``halving_threshold`` the rate is halved
    after that epoch and after every later one. Training stops as soon as the
    gain drops below ``stop_threshold``. Neither rule fires during the first
    ``min_epochs`` epochs.
    """

    lr: float
    halving_threshold: float = 0.5
    stop_threshold: float = 0.1
    min_epochs: int = 0
    max_epochs: int | None = None
    halving: bool = False
    stopped: bool = False
    epoch: int = 0
    prev_acc: float | None = None

    def __post_init__(self):
        if self.halving_threshold <= 0 or self.stop_threshold <= 0:
            raise ValueError("thresholds must be positive")
        if self.stop_threshold > self.halving_threshold:
            raise ValueError("stop threshold must not exceed the halving threshold")

    def start(self, acc: float) -> None:
        self.prev_acc = acc

    def update(self, acc: float) -> bool:
        """Record the accuracy after an epoch; return False when training should stop."""
        self.epoch += 1
        improvement = acc - self.prev_acc if self.prev_acc is not None else float("inf")
        self.prev_acc = acc
        if self.epoch >= self.min_epochs:
            if improvement < self.stop_threshold:
                self.stopped = True
            else:
                if improvement < self.halving_threshold:
                    self.halving = True
                if self.halving:
                    self.lr *= 0.5
        if self.max_epochs is not None and self.epoch >= self.max_epochs:
            self.stopped = True
        return not self.stopped
