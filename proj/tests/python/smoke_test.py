"""End-to-end smoke test for the _gdln module.

Covers the main exposed operations: task factories, training, the gradient
oracle, closed forms and the reduced integrators. Fails loudly (nonzero
exit) on any violated expectation.
"""

import math
import sys

import _gdln


def check(cond, msg):
    if not cond:
        print("SMOKE FAIL:", msg)
        sys.exit(1)


def main():
    # Parity task: structure and exact corner statistics.
    xor = _gdln.xor_task(hidden_width=4)
    check(xor.num_paths() == 4, "parity task should have four pathways")
    check(abs(xor.total_weight() - 1.0) < 1e-12, "weights must sum to one")

    # Decoupled training follows the closed form (Euler error at h=1e-3).
    res = _gdln.train(xor, step=1e-3, steps=3000, log_every=100,
                      init="decoupled", scale=0.2, seed=0)
    check(res["losses"][-1] < res["losses"][0], "loss should decrease")
    _, ana_loss = _gdln.xor_analytic(0.2 * 0.2, 1.0, res["times"])
    gap = max(abs(a - b) for a, b in zip(res["losses"], ana_loss))
    check(gap < 1e-3, f"sim vs closed form gap {gap:.2e} too large")
    check(len(res["weights"]) == xor.num_edges(), "one matrix per edge")
    check(abs(_gdln.loss(xor, res["weights"]) - res["losses"][-1]) < 1e-9,
          "exported weights should reproduce the final loss")

    # Gradient oracle on a routing task.
    routing = _gdln.routing_task(M=3, K=2, hidden_width=5, seed=1)
    check(routing.route_mask.sum() == 6, "cyclic band should train K*M routes")
    worst = _gdln.gradient_gap(routing, seed=1, scale=0.5)
    check(worst < 1e-6, f"gradient oracle gap {worst:.2e}")

    # Hierarchy spectrum and the reduced integrators.
    S, D = _gdln.hierarchy_spectrum(seed=0)
    check(abs(S[0] - math.sqrt(7.0) / 4.0) < 1e-12, "top mode should be sqrt(7)/4")
    check(all(abs(d - 0.25) < 1e-12 for d in D), "input variance 1/4 per mode")

    ode = _gdln.routing_ode(S, D, M=7, K=4, b0=0.02, step=1e-3, steps=5000,
                            log_every=100)
    b1, b2 = ode["b1"], ode["b2"]
    c = 7.0 * b1 ** 2 - b2 ** 2
    drift = abs(c - c[0]).max() / abs(c[0]).max()
    check(drift < 1e-5, f"conserved quantity drifted by {drift:.2e}")

    race = _gdln.race_ode(S, D, M=10, P=16.0, b0=0.01, step=1.0, steps=200000,
                          log_every=200000)
    ratio = race["b2"][-1][0] / race["b1"][-1][0]
    target = _gdln.steady_state_ratio(10, 16.0)
    check(abs(target - 2.0) < 1e-12, "P=16 steady ratio should be 2")
    check(abs(ratio - target) < 0.01, f"race ratio {ratio:.4f} vs {target}")

    # Closed-form inverses.
    t_half = _gdln.xor_time_to_reach(0.5, 0.04, 2.5)
    a_back, _ = _gdln.xor_analytic(0.04, 2.5, [t_half])
    check(abs(a_back[0] - 0.5) < 1e-10, "time-to-reach should invert the curve")
    w_tau2 = _gdln.xor_transition_width(1e-3, 2.0)
    w_tau1 = _gdln.xor_transition_width(1e-3, 1.0)
    check(abs(w_tau2 - 2.0 * w_tau1) < 1e-12 * w_tau2,
          "width should scale linearly in tau")

    # Error surfaces from the native layer arrive as Python exceptions.
    try:
        _gdln.xor_analytic(-1.0, 1.0, [0.0])
        check(False, "negative start must be rejected")
    except _gdln.GdlnError:
        pass

    print("smoke ok")


if __name__ == "__main__":
    main()
