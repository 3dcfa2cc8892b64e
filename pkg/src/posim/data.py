"""Long-format person-visit data shared by generators, weights and estimators."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

NO_INITIATION = -1


@dataclass
class LongDataset:
    """One row per at-risk subject-visit, sorted by ``(id, k)``.

    ``k_star`` holds the treatment initiation visit known at that row, or
    ``NO_INITIATION``.  ``U`` is the latent health value (study I, per visit)
    or the frailty (study II, constant per subject).  ``T`` is the continuous
    event time of study II and ``None`` for study I.
    """

    study: int
    n: int
    K: int
    id: np.ndarray
    k: np.ndarray
    A: np.ndarray
    L: np.ndarray
    k_star: np.ndarray
    Y_next: np.ndarray
    forced: np.ndarray
    U: np.ndarray | None = None
    T: np.ndarray | None = None
    diagnostics: dict = field(default_factory=dict)

    def __len__(self) -> int:
        return len(self.id)

    @property
    def columns(self) -> list[str]:
        cols = ["id", "k", "A", "L", "k_star", "Y_next", "forced"]
        if self.study == 2:
            cols += ["U", "T"]
        return cols

    def subject_history(self, column: str = "A", fill=0) -> np.ndarray:
        """``n x (K+1)`` matrix of a per-visit column; visits after exit hold ``fill``."""
        values = getattr(self, column)
        out = np.full((self.n, self.K + 1), fill, dtype=np.result_type(values, np.asarray(fill)))
        out[self.id, self.k] = values
        return out

    def previous(self, column: str = "A", initial=0) -> np.ndarray:
        """Value of ``column`` at visit ``k-1`` for each row (``initial`` at k=0)."""
        values = getattr(self, column)
        prev = np.empty_like(values)
        prev[0] = initial
        prev[1:] = values[:-1]
        first = self.k == 0
        prev[first] = initial
        return prev

    def equals(self, other: "LongDataset") -> bool:
        """Bit-level equality of all columns."""
        if self.study != other.study or self.n != other.n or self.K != other.K:
            return False
        for name in self.columns + ["U"]:
            a, b = getattr(self, name), getattr(other, name)
            if a is None or b is None:
                if a is not b:
                    return False
                continue
            if a.shape != b.shape or a.tobytes() != b.tobytes():
                return False
        return True


def assemble(study: int, n: int, K: int, blocks: list[dict], **extra) -> LongDataset:
    """Stack per-visit column blocks and sort rows by ``(id, k)``."""
    cols = {name: np.concatenate([b[name] for b in blocks]) for name in blocks[0]}
    order = np.lexsort((cols["k"], cols["id"]))
    cols = {name: v[order] for name, v in cols.items()}
    return LongDataset(study=study, n=n, K=K, **cols, **extra)
