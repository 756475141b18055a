from concurrent.futures import ThreadPoolExecutor

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from scbnn import (
    AccumulationMode,
    Activation,
    EncodingRangeError,
    PreScaler,
    ReferenceNetwork,
    ScnnConfig,
    StreamKey,
    activate,
    fit_reference,
    forward_reference,
    forward_scnn,
    make_target,
    scnn_error_profile,
    unit_grid,
)
from scbnn.bitstream import network_prescalers

KEY = StreamKey(0xA11CE)


def net_of(weights, biases, outputs, activation=Activation.SIGMOID):
    W = np.atleast_2d(np.asarray(weights, dtype=float))
    b = np.asarray(biases, dtype=float)
    return ReferenceNetwork(
        W, b, np.asarray(outputs, dtype=float), activation, network_prescalers(W, b)
    )


class TestForwardScnn:
    def test_zero_output_layer(self):
        net = net_of([[1.3], [-0.2]], [0.4, 0.1], [0.0, 0.0])
        for M in (1, 16, 1024):
            for seed in (0, 7):
                cfg = ScnnConfig(M, StreamKey(seed))
                assert forward_scnn(net, [0.42], cfg) == 0.0

    def test_boundary_values_are_noiseless(self):
        # weights, bias, and input all sit on the encoding boundary, so every
        # stream is constant and the stochastic pass equals the exact pass
        net = net_of([[1.0]], [-1.0], [2.5])
        x = [1.0]
        for M in (1, 64):
            for seed in (0, 3):
                got = forward_scnn(net, x, ScnnConfig(M, StreamKey(seed)))
                assert got == forward_reference(net, x)

    def test_constant_bias_stream_is_exact(self):
        # w = 0 exactly and b at the bias scale: preactivation decodes to b
        net = net_of([[0.0]], [1.0], [1.0])
        assert net.prescalers["bias"].scale == 1.0
        got = forward_scnn(net, [0.0], ScnnConfig(32, StreamKey(1)))
        # w=0 encodes at p=1/2; product with x=0 (p=1/2) still decodes noisily,
        # but the bias contribution is exact: preactivation = noise + 1 where
        # the noise term decodes from a length-32 stream
        assert got == pytest.approx(forward_reference(net, [0.0]), abs=0.5)

    def test_matches_reference_at_large_M(self):
        f = make_target("sine", 1)
        net = fit_reference(f, 32, unit_grid(1, 256), StreamKey(2),
                            edge_fraction=0.75, noise_penalty=1e-2)
        cfg = ScnnConfig(2**14, StreamKey(99))
        got = forward_scnn(net, [0.25], cfg)
        assert abs(got - forward_reference(net, [0.25])) < 0.1

    def test_deterministic(self):
        net = net_of([[0.7], [0.3]], [0.2, -0.1], [1.0, -0.5])
        cfg = ScnnConfig(256, StreamKey(5))
        assert forward_scnn(net, [0.5], cfg) == forward_scnn(net, [0.5], cfg)

    def test_deterministic_across_threads(self):
        net = net_of([[0.7]], [0.2], [1.0])
        cfg = ScnnConfig(512, StreamKey(5))

        def job(_):
            return forward_scnn(net, [0.5], cfg)

        with ThreadPoolExecutor(max_workers=4) as pool:
            values = list(pool.map(job, range(12)))
        assert len(set(values)) == 1

    def test_mux_mode_runs(self):
        net = net_of([[0.7]], [0.2], [1.0])
        cfg = ScnnConfig(4096, StreamKey(5), AccumulationMode.MUX)
        got = forward_scnn(net, [0.5], cfg)
        assert abs(got - forward_reference(net, [0.5])) < 0.3

    def test_prescale_violation_raises(self):
        net = net_of([[3.0]], [0.5], [1.0])
        bad = {
            "weights": PreScaler(2.0, "weights"),
            "inputs": PreScaler(1.0, "inputs"),
            "bias": PreScaler(2.0, "bias"),
        }
        cfg = ScnnConfig(16, StreamKey(0), prescalers=bad)
        with pytest.raises(EncodingRangeError):
            forward_scnn(net, [0.5], cfg)

    def test_dimension_mismatch(self):
        net = net_of([[1.0, 0.5]], [0.0], [1.0])
        with pytest.raises(ValueError):
            forward_scnn(net, [0.5], ScnnConfig(8, KEY))

    @given(st.floats(-20, 20), st.floats(-20, 20))
    @settings(max_examples=100)
    def test_lipschitz_composition(self, p_hat, p):
        for act in Activation:
            lhs = abs(activate(act, p_hat) - activate(act, p))
            assert lhs <= act.derivative_bound * abs(p_hat - p) + 1e-12


class TestErrorProfile:
    def test_single_point_matches_forward(self):
        net = net_of([[0.7]], [0.2], [1.0])
        f = make_target("constant", 1, value=0.5)
        cfg = ScnnConfig(128, StreamKey(11))
        profile = scnn_error_profile(net, f, np.array([[0.3]]), cfg)
        got = forward_scnn(net, [0.3], ScnnConfig(128, StreamKey(11).derive(0)))
        assert profile.vs_reference[0] == abs(got - forward_reference(net, [0.3]))
        assert profile.vs_target[0] == abs(got - 0.5)

    def test_boundary_network_zero_noise(self):
        net = net_of([[1.0]], [-1.0], [1.5])
        f = make_target("constant", 1, value=0.0)
        profile = scnn_error_profile(net, f, np.array([[1.0]]), ScnnConfig(64, KEY))
        assert profile.vs_reference[0] == 0.0

    def test_median_error_improves_with_M(self):
        f = make_target("sine", 1)
        net = fit_reference(f, 32, unit_grid(1, 256), StreamKey(2),
                            edge_fraction=0.75, noise_penalty=1e-2)
        grid = unit_grid(1, 9)
        med = {}
        for M in (64, 4096):
            profile = scnn_error_profile(net, f, grid, ScnnConfig(M, StreamKey(77)))
            med[M] = profile.summary()["median_vs_reference"]
        assert med[4096] < med[64]

    def test_summary_keys(self):
        net = net_of([[0.7]], [0.2], [1.0])
        f = make_target("linear", 1)
        profile = scnn_error_profile(net, f, unit_grid(1, 5), ScnnConfig(32, KEY))
        s = profile.summary()
        for k in ("max_vs_reference", "median_vs_reference", "rms_vs_reference",
                  "max_vs_target", "median_vs_target", "rms_vs_target"):
            assert k in s and np.isfinite(s[k])


class TestPreactivationConvergence:
    def test_rms_slope_near_minus_half(self):
        # per-neuron preactivation error shrinks like 1/sqrt(M)
        net = net_of([[0.9, -0.4]], [0.3], [1.0])
        x = [0.6, 0.2]
        truth = float(net.hidden_weights[0] @ x + net.hidden_biases[0])
        Ms = [2**6, 2**8, 2**10, 2**12, 2**14]
        rms = []
        for mi, M in enumerate(Ms):
            errs = []
            for t in range(200):
                cfg = ScnnConfig(M, StreamKey(8).derive(mi, t))
                # alpha = 1 and identity-free activation read-through: recover
                # the preactivation via the relu of a shifted copy is awkward;
                # instead evaluate the full net and invert the (monotone)
                # sigmoid output of the single unit
                out = forward_scnn(net, x, cfg)
                pre = float(np.log(out / (1.0 - out)))
                errs.append(pre - truth)
            rms.append(float(np.sqrt(np.mean(np.square(errs)))))
        slope = float(np.polyfit(np.log(Ms), np.log(rms), 1)[0])
        assert all(a >= b for a, b in zip(rms, rms[1:]))
        assert -0.65 <= slope <= -0.35
