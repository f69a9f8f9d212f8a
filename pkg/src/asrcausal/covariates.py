"""Inferred covariates: pronunciation quality from frame posteriors,
vocabulary difficulty from pooled word frequencies, SNR from waveform
samples, and word counts from the reference text.

Pronunciation scoring follows the posterior-ratio formulation: a phone's
score is its duration-averaged log posterior minus the maximum averaged
log posterior over the whole phone inventory, hence always <= 0 and 0
exactly when the target phone is maximal.  Natural log throughout.
"""

from __future__ import annotations

import json
import math
import wave
from dataclasses import dataclass
from typing import Iterable, Mapping, Sequence

import numpy as np

from . import alignment
from .errors import (
    EmptyInputError,
    SchemaError,
    SilentAudioError,
    TooShortError,
    ZeroPosteriorError,
)
from .ingest import FrequencyTable

POSTERIOR_FLOOR = 1e-10
_SUM_TOL = 1e-6


@dataclass(frozen=True)
class PosteriorFrame:
    """Per-frame posteriors over phone states, P(s | o_t)."""

    t: int
    probs: Mapping[str, float]

    def validate(self) -> "PosteriorFrame":
        if self.t < 0:
            raise SchemaError(f"frame index {self.t} is negative")
        total = 0.0
        for state, p in self.probs.items():
            if not 0.0 <= p <= 1.0:
                raise SchemaError(
                    f"frame {self.t}: P({state!r}) = {p} outside [0, 1]")
            total += p
        if abs(total - 1.0) > _SUM_TOL:
            raise SchemaError(f"frame {self.t}: posteriors sum to {total}")
        return self


@dataclass(frozen=True)
class PhoneSegment:
    """A force-aligned phone span [t_s, t_e) with the phone-state inventory."""

    phone: str
    t_s: int
    t_e: int
    states_of: Mapping[str, Sequence[str]]

    def validate(self) -> "PhoneSegment":
        if self.t_e <= self.t_s:
            raise SchemaError(
                f"segment {self.phone!r}: t_e {self.t_e} <= t_s {self.t_s}")
        if self.phone not in self.states_of:
            raise SchemaError(f"phone {self.phone!r} not in inventory")
        for phone, states in self.states_of.items():
            if not states:
                raise SchemaError(f"phone {phone!r} has an empty state set")
        return self


@dataclass(frozen=True)
class GopScore:
    phone_scores: tuple[tuple[str, float], ...]
    utterance: float


def _avg_log_posteriors(segment: PhoneSegment,
                        frames: Sequence[PosteriorFrame],
                        floor: bool) -> dict[str, float]:
    """Duration-averaged log posterior per phone over the segment span."""
    by_t = {f.t: f for f in frames}
    span = range(segment.t_s, segment.t_e)
    for t in span:
        if t not in by_t:
            raise SchemaError(f"no posterior frame for t={t}")
    phones = sorted(segment.states_of)
    sums = dict.fromkeys(phones, 0.0)
    for t in span:
        probs = by_t[t].probs
        for phone in phones:
            mass = sum(probs.get(s, 0.0) for s in segment.states_of[phone])
            if mass <= 0.0:
                if not floor:
                    raise ZeroPosteriorError(
                        f"phone {phone!r} has zero posterior at t={t}")
                mass = POSTERIOR_FLOOR
            sums[phone] += math.log(mass)
    dur = segment.t_e - segment.t_s
    return {p: s / dur for p, s in sums.items()}


def gop_phone(segment: PhoneSegment, frames: Sequence[PosteriorFrame],
              *, floor: bool = False) -> float:
    """Pronunciation score of one phone: <= 0, 0 iff the target is maximal.

    ``floor`` opts into clamping zero posteriors at 1e-10 instead of
    raising, so numerical rescue stays visible at the call site.
    """
    segment.validate()
    avg = _avg_log_posteriors(segment, frames, floor)
    return avg[segment.phone] - max(avg.values())


def gop_utterance(segments: Sequence[PhoneSegment],
                  frames: Sequence[PosteriorFrame],
                  *, floor: bool = False) -> GopScore:
    """Per-phone scores plus their arithmetic mean."""
    if not segments:
        raise EmptyInputError("no phone segments")
    scores = []
    for index, segment in enumerate(segments):
        try:
            scores.append((segment.phone, gop_phone(segment, frames, floor=floor)))
        except ZeroPosteriorError as exc:
            raise ZeroPosteriorError(f"segment {index}: {exc}") from None
    mean = sum(s for _, s in scores) / len(scores)
    return GopScore(tuple(scores), mean)


def word_rarity(word: str, table: FrequencyTable) -> float:
    """Add-one-smoothed negative log relative frequency; >= 0.

    Unseen words get the maximum, -ln(1 / (total + V)).  Strictly
    decreasing in the word's count for a fixed table.
    """
    count = table.counts.get(word, 0)
    return -math.log((count + 1) / (table.total_tokens + table.vocab_size))


def sentence_difficulty(tokens: Sequence[str], table: FrequencyTable) -> float:
    """Mean word rarity over the token sequence."""
    if not tokens:
        raise EmptyInputError("no tokens to score")
    return sum(word_rarity(t, table) for t in tokens) / len(tokens)


def word_count(reference: str) -> int:
    """Token count of the reference under the scoring normalization."""
    return len(alignment.normalize_text(reference))


def estimate_snr(samples: Sequence[float], sample_rate: int) -> float:
    """Frame-energy SNR estimate in dB, clipped to [-10, +60].

    25 ms windows with a 10 ms hop; noise power is the mean of the
    lowest-decile frames, signal power the mean of frames at or above the
    median.  Invariant to global amplitude scaling.  Requires >= 100 ms
    of audio; all-zero input raises SilentAudioError.
    """
    x = np.asarray(samples, dtype=np.float64)
    if x.size < int(0.1 * sample_rate):
        raise TooShortError(
            f"need >= 100 ms of audio, got {x.size / sample_rate * 1000:.1f} ms")
    if not np.any(x):
        raise SilentAudioError("all samples are zero")
    win = max(1, int(0.025 * sample_rate))
    hop = max(1, int(0.010 * sample_rate))
    n_frames = 1 + (x.size - win) // hop
    idx = np.arange(win)[None, :] + hop * np.arange(n_frames)[:, None]
    power = np.mean(x[idx] ** 2, axis=1)
    power_sorted = np.sort(power)
    k = max(1, n_frames // 10)
    noise = float(np.mean(power_sorted[:k]))
    median = float(np.median(power))
    signal = float(np.mean(power[power >= median]))
    if noise <= 0.0:
        return 60.0
    snr = 10.0 * math.log10(signal / noise)
    return float(min(60.0, max(-10.0, snr)))


def read_audio(path: str, sample_rate: int | None = None
               ) -> tuple[np.ndarray, int]:
    """Load 16-bit PCM mono audio: WAV container or headerless raw.

    Raw files require an explicit ``sample_rate``.  Returns samples
    scaled to [-1, 1] and the sample rate.
    """
    if path.endswith(".wav"):
        with wave.open(path, "rb") as wav:
            if wav.getnchannels() != 1 or wav.getsampwidth() != 2:
                raise SchemaError(f"{path}: need 16-bit mono PCM")
            rate = wav.getframerate()
            payload = wav.readframes(wav.getnframes())
    else:
        if sample_rate is None:
            raise SchemaError(f"{path}: raw PCM needs a declared sample rate")
        rate = sample_rate
        with open(path, "rb") as fh:
            payload = fh.read()
        if len(payload) % 2:
            raise SchemaError(f"{path}: odd byte count for 16-bit PCM")
    samples = np.frombuffer(payload, dtype="<i2").astype(np.float64)
    return samples / 32768.0, rate


def parse_posterior_frames(stream: Iterable[str]
                           ) -> dict[str, list[PosteriorFrame]]:
    """Parse line-delimited ``{utterance_id, t, probs}`` records."""
    frames: dict[str, list[PosteriorFrame]] = {}
    for line_no, line in enumerate(stream, start=1):
        line = line.strip()
        if not line:
            continue
        try:
            raw = json.loads(line)
        except json.JSONDecodeError as exc:
            raise SchemaError(f"invalid JSON: {exc.msg}", line=line_no) from None
        for field in ("utterance_id", "t", "probs"):
            if field not in raw:
                raise SchemaError(f"missing field {field!r}", line=line_no)
        frame = PosteriorFrame(raw["t"], raw["probs"]).validate()
        frames.setdefault(raw["utterance_id"], []).append(frame)
    for fs in frames.values():
        fs.sort(key=lambda f: f.t)
    return frames


def parse_segments(stream: Iterable[str], inventory: Mapping[str, Sequence[str]]
                   ) -> dict[str, list[PhoneSegment]]:
    """Parse line-delimited ``{utterance_id, phone, t_s, t_e}`` records."""
    segments: dict[str, list[PhoneSegment]] = {}
    for line_no, line in enumerate(stream, start=1):
        line = line.strip()
        if not line:
            continue
        try:
            raw = json.loads(line)
        except json.JSONDecodeError as exc:
            raise SchemaError(f"invalid JSON: {exc.msg}", line=line_no) from None
        for field in ("utterance_id", "phone", "t_s", "t_e"):
            if field not in raw:
                raise SchemaError(f"missing field {field!r}", line=line_no)
        segment = PhoneSegment(raw["phone"], raw["t_s"], raw["t_e"],
                               inventory).validate()
        segments.setdefault(raw["utterance_id"], []).append(segment)
    for ss in segments.values():
        ss.sort(key=lambda s: s.t_s)
    return segments
