"""Acceptance criteria, one test per criterion.

Each test records a one-line verdict that is printed in the terminal
summary.  The performance criterion is a soft benchmark unless
``TFSCAT_STRICT_PERF`` is set.
"""

import json
import os
import time

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import ACCEPTANCE, SMALL_RATE, mirrored, noise, single
from tfscat import adjoint as ad
from tfscat import signals
from tfscat.audio import AudioBuffer
from tfscat.container import parse_container, read_coefficients, write_coefficients
from tfscat.errors import DataError
from tfscat.filterbank import build_cqt_bank, littlewood_paley
from tfscat.scalerate import (
    ChirpInversion,
    CoefficientFunctional,
    chirp_inversion,
    constant_schedule,
    render_effect,
)
from tfscat.scattering import (
    ScatteringConfig,
    ScatteringPath,
    Scalogram,
    _smooth,
    coefficients,
    cqt,
    energy_budget,
    get_network,
    strf,
)
from tfscat.synthesis import SynthesisOptions, synthesize
from tfscat.wavio import parse_wav_bytes, read_wav, write_wav

STRICT_PERF = bool(os.environ.get("TFSCAT_STRICT_PERF"))


def verdict(n, title, ok, detail):
    ACCEPTANCE[n] = f"criterion {n} {'PASS' if ok else 'FAIL'}: {title} ({detail})"
    return ok


def test_c1_filterbank_frame():
    t0 = time.perf_counter()
    bank = build_cqt_bank(44100.0, 12, 9, 2**16)
    lower, upper, _ = littlewood_paley(bank)
    elapsed = time.perf_counter() - t0
    ok = upper <= 1 + 1e-6 and lower >= 0.9 and elapsed < 1.0
    assert verdict(1, "Littlewood-Paley bounds of the CQT bank", ok,
                   f"min {lower:.4f}, max {upper:.8f}, {elapsed:.2f} s")


def test_c2_energy():
    cfg = ScatteringConfig()
    d, rate = 2.0, 44100.0
    fixtures = {
        "white": signals.white_noise(d, rate, 1),
        "pink": signals.pink_noise(d, rate, 2),
        "chirps": signals.chirp_train(signals.chirp_events(d), d, rate),
        "am": signals.am_tone(d, rate),
        "speech": signals.speech_like(d, rate, 3),
    }
    t0 = time.perf_counter()
    rows, ok = [], True
    for name, x in fixtures.items():
        assert abs(x.samples.mean()) < 1e-12
        e = energy_budget(x, cfg)
        total = (e["S1"] + e["S2"]) / e["x"]
        layer = (e["S1"] + e["U2"]) / e["U1"]
        ok &= total <= 1.01 and 0.85 <= layer <= 1.01
        rows.append(f"{name} {total:.3f}/{layer:.3f}")
    elapsed = time.perf_counter() - t0
    ok &= elapsed < 30
    assert verdict(2, "energy conservation, |Sx|^2/|x|^2 and (|S1|^2+|U2|^2)/|U1|^2", ok,
                   ", ".join(rows) + f"; {elapsed:.1f} s")


def test_c3_gradient(small_cfg, small_net):
    target = coefficients(noise(2048, seed=11), small_cfg)
    y = noise(2048, seed=12)
    g, _ = ad.backscatter(target, y, small_cfg)

    def energy(v):
        return ad.loss(target, coefficients(AudioBuffer(v, SMALL_RATE), small_cfg)).total

    eps = 1e-4
    fd = np.empty(2048)
    for k in range(2048):
        e = np.zeros(2048)
        e[k] = eps
        fd[k] = -(energy(y.samples + e) - energy(y.samples - e)) / (2 * eps)
    chain = np.linalg.norm(g.samples - fd) / np.linalg.norm(fd)

    rng = np.random.default_rng(0)
    net = small_net
    a = rng.standard_normal(2048)
    q1 = rng.standard_normal((net.frames, 12)) + 1j * rng.standard_normal((net.frames, 12))
    lhs = np.vdot(q1, ad.first_layer_linear(a, net))
    rhs = np.vdot(ad.first_layer_adjoint(q1, net, 2048, real=False), a)
    dots = [abs(lhs - rhs) / abs(lhs)]
    u = rng.standard_normal((net.frames, 12))
    shape = (len(net.paths), net.frames, 12)
    q2 = rng.standard_normal(shape) + 1j * rng.standard_normal(shape)
    lhs = np.vdot(q2, ad.second_layer_linear(u, net))
    rhs = np.vdot(ad.second_layer_adjoint(q2, net, real=False), u)
    dots.append(abs(lhs - rhs) / abs(lhs))
    v = rng.standard_normal(shape)
    r = rng.standard_normal((len(net.paths), 256, 12))
    lhs = np.sum(_smooth(v, net.phi_t, net.phi_f)[:, :256] * r)
    rhs = np.sum(v * ad.grad_s2_to_u2(r, net.phi_t, net.phi_f, net.frames))
    dots.append(abs(lhs - rhs) / abs(lhs))

    ok = chain < 1e-4 and max(dots) < 1e-10
    assert verdict(3, "gradient against finite differences and adjoint dot products", ok,
                   f"chain {chain:.2e}, dot products max {max(dots):.1e}")


_C4_WORST = []


@settings(max_examples=30, deadline=None)
@given(seed=st.integers(0, 2**32 - 1), a=st.integers(0, 3), b=st.sampled_from([1.0, 2.0]))
def test_c4_beta_flip(small_net, seed, a, b):
    net = small_net
    u1 = Scalogram(np.random.default_rng(seed).random((net.frames, 12)), 1024.0,
                   net.lambda_grid)
    ab, bb = net.alpha_bank, net.beta_bank
    fa = ab.filters[a]
    lhs = strf(u1, single(ab, fa), single(bb, bb.filters[bb.index_of(-b)]),
               [ScatteringPath(fa.center_frequency, -b)]).values
    rhs = strf(u1, single(ab, mirrored(fa)), single(bb, bb.filters[bb.index_of(b)]),
               [ScatteringPath(-fa.center_frequency, b)]).values
    err = np.abs(rhs - lhs).max() / np.abs(lhs).max()
    _C4_WORST.append(err)
    worst = max(_C4_WORST)
    ok = worst < 1e-10
    verdict(4, "U2 with (-alpha, beta) equals U2 with (alpha, -beta)", ok,
            f"worst relative error {worst:.1e} over {len(_C4_WORST)} draws")
    assert err < 1e-10


def test_c5_resynthesis():
    cfg = ScatteringConfig()
    x = signals.pink_noise(1.0, 44100.0, seed=8)
    t0 = time.perf_counter()
    _, state = synthesize(x, cfg, SynthesisOptions(iterations=50))
    elapsed = time.perf_counter() - t0
    acc = state.accepted_losses()
    ratio = state.loss.total / state.initial_loss.total
    ok = all(b < a for a, b in zip(acc, acc[1:])) and ratio < 0.2
    assert verdict(5, "resynthesis of 1 s pink noise", ok,
                   f"E50/E0 {ratio:.4f}, {len(acc) - 1} accepted steps, {elapsed:.0f} s")


# Sweeps last about a tenth of T, so first-order coefficients barely see
# their direction, and move at roughly alpha/|beta| for alpha = 32 Hz,
# |beta| = 1 cycle/octave, so the modulation filters do.
C6_RATE = 11025.0
C6_DURATION = 10.0
C6_CONFIG = dict(sample_rate=C6_RATE, Q=12, octaves=5, T=4096 / C6_RATE, F=1.0)
C6_EVENTS = dict(period=0.4, length=0.04, f_low=1500.0, f_high=3700.0, pattern="uudu")
# an event counts as far from the schedule origin beyond this many tau
C6_FAR = 1.5


def ridge_slopes(x, events, bank, hop=16):
    """Slope of the energy-weighted log2-frequency centroid over each event (octaves/s)."""
    u = cqt(x, bank, hop).values
    log_grid = np.log2(bank.grid)
    rate = x.sample_rate / hop
    out = []
    for ev in events:
        a, b = int(ev.onset * rate), int((ev.onset + ev.duration) * rate)
        seg = u[a:b] ** 2
        energy = seg.sum(axis=1)
        keep = energy > 0.1 * energy.max()
        centroid = (seg * log_grid).sum(axis=1) / np.maximum(energy, 1e-300)
        t = np.arange(a, b) / rate
        out.append(np.polyfit(t[keep], centroid[keep], 1, w=np.sqrt(energy[keep]))[0])
    return np.array(out)


def test_c6_chirp_inversion():
    cfg = ScatteringConfig(**C6_CONFIG)
    events = signals.chirp_events(C6_DURATION, **C6_EVENTS)
    x = signals.chirp_train(events, C6_DURATION, C6_RATE)
    tau, origin = 4 * cfg.T, C6_DURATION / 2
    f = CoefficientFunctional([ChirpInversion("sigmoid", tau=tau, origin=origin)])
    t0 = time.perf_counter()
    y, state, _ = render_effect(x, f, cfg, SynthesisOptions(iterations=100))
    elapsed = time.perf_counter() - t0
    bank = get_network(cfg, len(x)).lambda_bank
    before, after = ridge_slopes(x, events, bank), ridge_slopes(y, events, bank)
    assert np.all(np.sign(before) == [ev.direction for ev in events])
    agree = scored = 0
    for ev, s0, s1 in zip(events, before, after):
        rel_t = (ev.center - origin) / tau
        if abs(rel_t) <= C6_FAR:
            continue
        expected = np.sign(s0) if rel_t < 0 else -np.sign(s0)
        scored += 1
        agree += int(np.sign(s1) == expected)
    share = agree / scored
    ok = share >= 0.8 and elapsed < 600 and state.loss.total < state.initial_loss.total
    # reference: how often plain resynthesis keeps each event's direction
    plain, _ = synthesize(x, cfg, SynthesisOptions(iterations=100))
    kept = int(np.sum(np.sign(ridge_slopes(plain, events, bank)) == np.sign(before)))
    verdict(6, "chirp inversion ridge slopes", ok,
            f"{agree}/{scored} events agree ({share:.0%}), {elapsed:.0f} s; "
            f"plain resynthesis keeps {kept}/{len(events)} directions")
    assert ok


def test_c7_performance():
    cfg = ScatteringConfig()
    x = signals.pink_noise(6.0, 44100.0, seed=9)
    target = coefficients(signals.pink_noise(6.0, 44100.0, seed=10), cfg)
    ad.backscatter(target, x, cfg)  # builds and caches the network
    t0 = time.perf_counter()
    ad.backscatter(target, x, cfg)
    elapsed = time.perf_counter() - t0
    speed = x.duration / elapsed
    ok = speed >= 0.5
    mode = "strict" if STRICT_PERF else "soft"
    verdict(7, f"forward+backward speed on 6 s at 44.1 kHz, {mode}", ok,
            f"{speed:.2f}x real time, {elapsed:.1f} s")
    if STRICT_PERF:
        assert ok
    elif not ok:
        pytest.skip(f"{speed:.2f}x real time is below 0.5x on this machine")


def test_c8_chirp_algebra():
    cfg = ScatteringConfig(sample_rate=22050.0, octaves=7)
    s2 = coefficients(signals.chirp_train(signals.chirp_events(2.0), 2.0, 22050.0), cfg).s2
    ident = chirp_inversion(s2, constant_schedule(1.0, s2.n_frames)).values
    swap = constant_schedule(-1.0, s2.n_frames)
    twice = chirp_inversion(chirp_inversion(s2, swap), swap).values
    once = chirp_inversion(s2, swap).values
    ok = (np.array_equal(ident, s2.values) and np.array_equal(twice, s2.values)
          and not np.array_equal(once, s2.values))
    assert verdict(8, "sigma=1 identity and sigma=-1 involution, bit for bit", ok,
                   f"{len(s2.paths)} paths x {s2.n_frames} frames")


def test_c9_io(tmp_path, small_cfg):
    rng = np.random.default_rng(0)
    x = AudioBuffer(rng.uniform(-1, 1, 3000).astype(np.float32), 8192.0)
    write_wav(x, tmp_path / "x.wav")
    wav_ok = np.array_equal(read_wav(tmp_path / "x.wav").samples, x.samples)
    pcm = AudioBuffer(np.round(rng.uniform(-1, 1, 3000) * 32767) / 32768, 8192.0)
    write_wav(pcm, tmp_path / "p.wav", "pcm16")
    # integer-valued input plus dither of at most one step either way
    pcm_ok = np.max(np.abs(read_wav(tmp_path / "p.wav").samples - pcm.samples)) <= 1 / 32768

    c = coefficients(noise(2048, seed=3), small_cfg)
    write_coefficients(tmp_path / "c.sct", c)
    back, _ = read_coefficients(tmp_path / "c.sct")
    sct_ok = (np.array_equal(back.s2.values, c.s2.values.astype(np.float32))
              and np.array_equal(back.s1.values, c.s1.values.astype(np.float32)))
    write_coefficients(tmp_path / "d.sct", back)
    sct_ok &= (tmp_path / "c.sct").read_bytes() == (tmp_path / "d.sct").read_bytes()

    wav = bytearray((tmp_path / "x.wav").read_bytes())
    sct = bytearray((tmp_path / "c.sct").read_bytes())
    crashes = 0
    trials = 3000
    for i in range(trials):
        for blob, parse in ((wav, parse_wav_bytes), (sct, parse_container)):
            data = bytearray(blob)
            mode = i % 3
            if mode == 0:
                data = data[: int(rng.integers(0, len(data)))]
            elif mode == 1:
                pos = rng.integers(0, min(len(data), 200), size=4)
                data[pos[0]] = data[pos[1]] = data[pos[2]] = data[pos[3]] = int(rng.integers(256))
            else:
                pos = int(rng.integers(0, 64))
                data[pos:pos + 4] = rng.integers(0, 256, 4).astype(np.uint8).tobytes()
            try:
                parse(bytes(data))
            except DataError:
                pass
            except Exception:  # noqa: BLE001 - any other exception is a crash
                crashes += 1
    ok = wav_ok and pcm_ok and sct_ok and crashes == 0
    assert verdict(9, "I/O roundtrips and fuzzed parsers", ok,
                   f"wav {wav_ok}, pcm16 {pcm_ok}, sct {sct_ok}, "
                   f"{crashes} crashes in {2 * trials} mutated files")


def test_verdicts_are_json_safe():
    json.dumps(ACCEPTANCE)
