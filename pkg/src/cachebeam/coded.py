"""Coded-caching combinatorics: subfile labels, cache placement, XOR coded messages.

Users and files are indexed 1-based.  Subfile labels and multicast groups are
canonical subsets: strictly increasing tuples of user indices.  Every function
that enumerates subsets does so in lexicographic order, and everything
downstream (scheduling, constraint enumeration, tie-breaking) relies on that
ordering being stable.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property
from itertools import combinations
from math import comb

import numpy as np

DEFAULT_NOISE_DBW = -134.0

UserSet = tuple[int, ...]


class ConfigurationError(ValueError):
    """System parameters are inconsistent (e.g. non-integer caching factor)."""


class CacheConsistencyError(RuntimeError):
    """A decode required a cache segment that placement should have provided."""


@dataclass(frozen=True)
class SystemConfig:
    """Dimensions and targets shared by every stage of the delivery pipeline.

    Attributes:
        num_files: library size N.
        num_users: number of receivers K.
        cache_size: per-user cache budget M, in units of files.
        num_antennas: transmit antennas at the server.
        rate: per-file delivery rate R in bits/s/Hz.
        decode_limit: per-user, per-slot decode budget s for the greedy scheduler.
        noise_power_w: receiver noise power in watts; a scalar is broadcast to
            all users, otherwise a length-K sequence.
    """

    num_files: int
    num_users: int
    cache_size: int
    num_antennas: int = 1
    rate: float = 1.0
    decode_limit: int = 1
    noise_power_w: float | tuple[float, ...] = 10.0 ** (DEFAULT_NOISE_DBW / 10.0)

    def __post_init__(self):
        for name in ("num_files", "num_users", "cache_size", "num_antennas", "decode_limit"):
            value = getattr(self, name)
            if not isinstance(value, (int, np.integer)) or isinstance(value, bool) or value < 1:
                raise ConfigurationError(f"{name} must be a positive integer, got {value!r}")
        if self.rate <= 0:
            raise ConfigurationError(f"rate must be positive, got {self.rate!r}")
        t_num = self.cache_size * self.num_users
        if t_num % self.num_files != 0:
            raise ConfigurationError(
                f"caching factor t = M*K/N = {self.cache_size}*{self.num_users}/{self.num_files} "
                "is not an integer; choose M, K, N so memory splits evenly"
            )
        t = t_num // self.num_files
        if not 1 <= t <= self.num_users - 1:
            raise ConfigurationError(f"caching factor t = {t} outside the supported range [1, K-1]")
        noise = self.noise_power_w
        if isinstance(noise, (int, float, np.floating)):
            noise = (float(noise),) * self.num_users
        else:
            noise = tuple(float(v) for v in noise)
            if len(noise) != self.num_users:
                raise ConfigurationError(
                    f"noise_power_w needs one entry per user ({self.num_users}), got {len(noise)}"
                )
        if any(v <= 0 for v in noise):
            raise ConfigurationError("noise_power_w entries must be positive")
        object.__setattr__(self, "noise_power_w", noise)

    @property
    def caching_factor(self) -> int:
        """Integer t = M*K/N; each subfile is cached by exactly t users."""
        return self.cache_size * self.num_users // self.num_files

    @property
    def subfiles_per_file(self) -> int:
        return comb(self.num_users, self.caching_factor)

    @property
    def num_messages(self) -> int:
        return comb(self.num_users, self.caching_factor + 1)

    @property
    def messages_per_user(self) -> int:
        return comb(self.num_users - 1, self.caching_factor)

    @property
    def per_message_rate(self) -> float:
        """Rate carried by one coded message so that a full file arrives at rate R."""
        return self.rate / self.subfiles_per_file

    def noise_vector(self) -> np.ndarray:
        return np.asarray(self.noise_power_w, dtype=float)


def user_subsets(num_users: int, size: int) -> tuple[UserSet, ...]:
    """All size-`size` subsets of {1..num_users} in lexicographic order."""
    return tuple(combinations(range(1, num_users + 1), size))


def validate_user_set(subset, num_users: int, *, name: str = "subset") -> UserSet:
    """Check that `subset` is a canonical user subset; return it as a tuple."""
    try:
        t = tuple(int(u) for u in subset)
    except (TypeError, ValueError):
        raise ValueError(f"{name} must be an iterable of user indices, got {subset!r}") from None
    if any(not 1 <= u <= num_users for u in t):
        raise ValueError(f"{name} {t} has entries outside 1..{num_users}")
    if any(a >= b for a, b in zip(t, t[1:])):
        raise ValueError(f"{name} {t} must be strictly increasing (canonical form)")
    return t


@dataclass(frozen=True, eq=True)
class MessageSet:
    """The coded multicast messages for one demand round.

    `messages` holds every (t+1)-subset of users in lexicographic order; the
    message for subset T is the XOR of the subfiles wanted by each member and
    cached by the other t members.  `per_user_indices[k-1]` lists the indices
    into `messages` of the messages user k must decode.
    """

    num_users: int
    caching_factor: int
    messages: tuple[UserSet, ...]
    per_user_indices: tuple[tuple[int, ...], ...]

    @cached_property
    def _index(self) -> dict[UserSet, int]:
        return {msg: i for i, msg in enumerate(self.messages)}

    def index_of(self, message: UserSet) -> int:
        try:
            return self._index[tuple(message)]
        except KeyError:
            raise ValueError(f"{tuple(message)} is not a coded message of this set") from None

    def messages_for(self, user: int) -> tuple[UserSet, ...]:
        if not 1 <= user <= self.num_users:
            raise ValueError(f"user {user} outside 1..{self.num_users}")
        return tuple(self.messages[i] for i in self.per_user_indices[user - 1])


def build_message_set(cfg: SystemConfig) -> MessageSet:
    """Enumerate all C(K, t+1) coded messages and the per-user decode lists."""
    t = cfg.caching_factor
    messages = user_subsets(cfg.num_users, t + 1)
    per_user = tuple(
        tuple(i for i, msg in enumerate(messages) if k in msg)
        for k in range(1, cfg.num_users + 1)
    )
    return MessageSet(cfg.num_users, t, messages, per_user)


@dataclass(frozen=True)
class PayloadLibrary:
    """File payloads split into equal subfiles keyed by t-subset labels.

    Files are zero-padded to a common length divisible by C(K, t); the
    original byte lengths are kept so reconstruction can strip the padding.
    """

    num_users: int
    caching_factor: int
    files: tuple[bytes, ...]
    original_lengths: tuple[int, ...]
    labels: tuple[UserSet, ...]
    segment_length: int

    @property
    def num_files(self) -> int:
        return len(self.files)

    @cached_property
    def _label_offset(self) -> dict[UserSet, int]:
        return {lab: j * self.segment_length for j, lab in enumerate(self.labels)}

    def segment(self, file_index: int, label: UserSet) -> bytes:
        """Subfile `label` of file `file_index` (1-based)."""
        if not 1 <= file_index <= self.num_files:
            raise ValueError(f"file index {file_index} outside 1..{self.num_files}")
        label = tuple(label)
        if label not in self._label_offset:
            raise ValueError(f"{label} is not a subfile label (need a canonical t-subset)")
        off = self._label_offset[label]
        return self.files[file_index - 1][off:off + self.segment_length]

    def original_file(self, file_index: int) -> bytes:
        """File content with padding stripped."""
        if not 1 <= file_index <= self.num_files:
            raise ValueError(f"file index {file_index} outside 1..{self.num_files}")
        return self.files[file_index - 1][: self.original_lengths[file_index - 1]]


def split_library(cfg: SystemConfig, raw_files) -> PayloadLibrary:
    """Pad `raw_files` to a common length and split each into C(K, t) subfiles."""
    raw = [bytes(f) for f in raw_files]
    if len(raw) != cfg.num_files:
        raise ValueError(f"expected {cfg.num_files} files, got {len(raw)}")
    t = cfg.caching_factor
    pieces = cfg.subfiles_per_file
    longest = max((len(f) for f in raw), default=0)
    padded_len = -(-max(longest, 1) // pieces) * pieces
    files = tuple(f.ljust(padded_len, b"\x00") for f in raw)
    return PayloadLibrary(
        num_users=cfg.num_users,
        caching_factor=t,
        files=files,
        original_lengths=tuple(len(f) for f in raw),
        labels=user_subsets(cfg.num_users, t),
        segment_length=padded_len // pieces,
    )


def place_caches(cfg: SystemConfig, lib: PayloadLibrary) -> dict[int, dict[tuple[int, UserSet], bytes]]:
    """Cache contents per user: user k stores subfile (i, G) of every file iff k is in G."""
    placement: dict[int, dict[tuple[int, UserSet], bytes]] = {}
    for k in range(1, cfg.num_users + 1):
        placement[k] = {
            (i, lab): lib.segment(i, lab)
            for i in range(1, lib.num_files + 1)
            for lab in lib.labels
            if k in lab
        }
    return placement


def _xor_bytes(a: bytes, b: bytes) -> bytes:
    return np.bitwise_xor(
        np.frombuffer(a, dtype=np.uint8), np.frombuffer(b, dtype=np.uint8)
    ).tobytes()


def _validate_demands(demands, num_users: int, num_files: int) -> tuple[int, ...]:
    d = tuple(int(v) for v in demands)
    if len(d) != num_users:
        raise ValueError(f"demands needs one file index per user ({num_users}), got {len(d)}")
    if any(not 1 <= v <= num_files for v in d):
        raise ValueError(f"demands {d} has file indices outside 1..{num_files}")
    return d


def xor_encode(group: UserSet, demands, lib: PayloadLibrary) -> bytes:
    """Coded payload for multicast group T: XOR over k in T of subfile (d_k, T\\{k}).

    Every XOR-ed segment is cached by the remaining t members of T, so each
    member can cancel all but its own subfile.
    """
    group = validate_user_set(group, lib.num_users, name="group")
    if len(group) != lib.caching_factor + 1:
        raise ValueError(
            f"group {group} has size {len(group)}; coded messages target exactly "
            f"t+1 = {lib.caching_factor + 1} users"
        )
    d = _validate_demands(demands, lib.num_users, lib.num_files)
    payload = bytes(lib.segment_length)
    for k in group:
        label = tuple(u for u in group if u != k)
        payload = _xor_bytes(payload, lib.segment(d[k - 1], label))
    return payload


def decode_user(user: int, group: UserSet, coded: bytes,
                cache: dict[tuple[int, UserSet], bytes], demands) -> bytes:
    """Recover user `user`'s subfile (d_user, T\\{user}) from the coded payload.

    `cache` is that user's placement dict.  The decode XORs out the t
    interfering subfiles, all of which placement guarantees are cached.
    """
    group = validate_user_set(group, max(group) if group else 1, name="group")
    if user not in group:
        raise ValueError(f"user {user} is not a member of group {group}")
    d = tuple(int(v) for v in demands)
    payload = coded
    for other in group:
        if other == user:
            continue
        label = tuple(u for u in group if u != other)
        key = (d[other - 1], label)
        if key not in cache:
            raise CacheConsistencyError(
                f"user {user} is missing cached segment {key} needed to decode group {group}"
            )
        payload = _xor_bytes(payload, cache[key])
    return payload


def recover_file(user: int, demands, lib: PayloadLibrary,
                 cache: dict[tuple[int, UserSet], bytes],
                 coded_payloads: dict[UserSet, bytes]) -> bytes:
    """Rebuild user `user`'s demanded file from its cache plus decoded messages.

    `coded_payloads` maps each multicast group to its coded payload; only the
    groups containing `user` are consulted.  Returns the file with padding
    stripped.
    """
    d = _validate_demands(demands, lib.num_users, lib.num_files)
    want = d[user - 1]
    parts = []
    for label in lib.labels:
        if user in label:
            key = (want, label)
            if key not in cache:
                raise CacheConsistencyError(f"user {user} should have cached {key}")
            parts.append(cache[key])
        else:
            group = tuple(sorted(label + (user,)))
            if group not in coded_payloads:
                raise ValueError(f"no coded payload supplied for group {group}")
            parts.append(decode_user(user, group, coded_payloads[group], cache, d))
    full = b"".join(parts)
    return full[: lib.original_lengths[want - 1]]
