"""Immutable, hashable environments: shared (Γ), session (Δ) and global (E)."""

from typing import Any, Callable, Iterable, Iterator, Mapping, Tuple, Union

from .syntax import Endpoint, Var


def _key_order(key: Any) -> Tuple:
    if isinstance(key, Endpoint):
        return (0, key.session, key.role)
    if isinstance(key, Var):
        return (1, key.name, 0)
    return (2, str(key), 0)


def show_key(key: Any) -> str:
    if isinstance(key, Endpoint):
        return f"{key.session}[{key.role}]"
    if isinstance(key, Var):
        return key.name
    return str(key)


class FrozenEnv(Mapping):
    """A finite map kept sorted by key so equal environments hash equally."""

    __slots__ = ("_items", "_index", "_hash")

    def __init__(self, items: Union[Mapping, Iterable[Tuple[Any, Any]]] = ()):
        index = dict(items.items() if isinstance(items, Mapping) else items)
        self._index = index
        self._items = tuple(sorted(index.items(), key=lambda kv: _key_order(kv[0])))
        self._hash = None

    def __getitem__(self, key):
        return self._index[key]

    def __iter__(self) -> Iterator:
        return (k for k, _ in self._items)

    def __len__(self) -> int:
        return len(self._items)

    def __hash__(self) -> int:
        if self._hash is None:
            self._hash = hash(self._items)
        return self._hash

    def __eq__(self, other) -> bool:
        if isinstance(other, FrozenEnv):
            return self._items == other._items
        if isinstance(other, Mapping):
            return self._index == dict(other)
        return NotImplemented

    def __repr__(self) -> str:
        return f"{type(self).__name__}({dict(self._items)!r})"

    def extend(self, other: Mapping):
        """Disjoint union; overlapping domains are an error."""
        clash = set(self._index) & set(other)
        if clash:
            raise ValueError(f"domains overlap on {sorted(show_key(k) for k in clash)}")
        return type(self)({**self._index, **dict(other)})

    def set(self, key, value):
        return type(self)({**self._index, key: value})

    def remove(self, *keys):
        return type(self)({k: v for k, v in self._index.items() if k not in keys})

    def restrict(self, keep: Callable[[Any, Any], bool]):
        return type(self)({k: v for k, v in self._index.items() if keep(k, v)})

    def show(self) -> str:
        if not self._items:
            return "∅"
        return " · ".join(f"{show_key(k)}: {self._show_value(v)}" for k, v in self._items)

    def _show_value(self, value) -> str:
        return str(value)


class SharedEnv(FrozenEnv):
    """Γ: shared names, atoms and variables to sorts."""

    __slots__ = ()

    def _show_value(self, value) -> str:
        from .session_types import show_sort

        return show_sort(value)


class SessionEnv(FrozenEnv):
    """Δ: endpoints (or session variables) to local types."""

    __slots__ = ()

    def _show_value(self, value) -> str:
        from .session_types import show_local

        return show_local(value)

    def sessions(self) -> frozenset:
        return frozenset(k.session for k in self if isinstance(k, Endpoint))

    def of_session(self, session: str) -> "SessionEnv":
        return self.restrict(lambda k, _: isinstance(k, Endpoint) and k.session == session)

    def without_ends(self) -> "SessionEnv":
        from .session_types import is_end

        return self.restrict(lambda _, t: not is_end(t))


class GlobalEnv(FrozenEnv):
    """E: session names to global types."""

    __slots__ = ()

    def _show_value(self, value) -> str:
        from .session_types import show_global

        return show_global(value)


EMPTY_GAMMA = SharedEnv()
EMPTY_DELTA = SessionEnv()
EMPTY_GENV = GlobalEnv()
