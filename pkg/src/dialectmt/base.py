"""Minimal estimator base and input validation helpers.

The estimators follow the fit/predict + get_params/set_params convention so
they drop into pipelines and grid searches that expect that interface, without
pulling in scikit-learn as a dependency.
"""

from __future__ import annotations

import inspect

from .errors import EmptyInputError


class BaseEstimator:
    """get_params/set_params over the constructor signature."""

    @classmethod
    def _param_names(cls):
        sig = inspect.signature(cls.__init__)
        return [name for name, p in sig.parameters.items()
                if name != "self" and p.kind != p.VAR_KEYWORD]

    def get_params(self, deep: bool = True) -> dict:
        return {name: getattr(self, name) for name in self._param_names()}

    def set_params(self, **params):
        valid = set(self._param_names())
        for name, value in params.items():
            if name not in valid:
                raise ValueError(
                    f"invalid parameter {name!r} for {type(self).__name__}; "
                    f"valid parameters are {sorted(valid)}")
            setattr(self, name, value)
        return self

    def __repr__(self):
        args = ", ".join(f"{k}={v!r}" for k, v in self.get_params().items())
        return f"{type(self).__name__}({args})"


def check_is_fitted(estimator, attribute: str):
    if getattr(estimator, attribute, None) is None:
        raise RuntimeError(
            f"{type(estimator).__name__} is not fitted yet; call fit first")


def check_pair_list(pairs, name: str = "pairs") -> list:
    """Validate a corpus of (source, target) pairs.

    Objects exposing ``source_words``/``target_words`` (generated corpus
    entries) pass through untouched.
    """
    pairs = list(pairs)
    if not pairs:
        raise EmptyInputError(f"{name}: empty corpus")
    for n, p in enumerate(pairs):
        if hasattr(p, "source_words") and hasattr(p, "target_words"):
            continue
        if len(p) != 2:
            raise ValueError(f"{name}[{n}]: expected a (source, target) pair")
    return pairs


def check_text_list(texts, name: str = "X") -> list[str]:
    texts = list(texts)
    for n, t in enumerate(texts):
        if not isinstance(t, str):
            raise TypeError(f"{name}[{n}]: expected str, got {type(t).__name__}")
    return texts
