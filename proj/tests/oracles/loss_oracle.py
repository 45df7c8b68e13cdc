#!/usr/bin/env python3
# Copyright 2026 The ERDE Authors
# SPDX-License-Identifier: Apache-2.0
"""Independent high-precision reference values for the loss and exit tests.

Evaluates the closed forms with mpmath at 50 digits, without touching the C++
tensor core, and prints `name = value` lines. The output is frozen in
tests/fixtures/oracle_values.txt; the `oracle_values_fresh` test re-runs this
script and diffs against the frozen file.
"""

import sys

try:
    from mpmath import mp, mpf, exp, log
except ImportError:  # pragma: no cover
    sys.stderr.write("mpmath not available\n")
    sys.exit(77)

mp.dps = 50


def softmax(z, t=1):
    m = max(z)
    e = [exp((v - m) / t) for v in z]
    s = sum(e)
    return [v / s for v in e]


def kl_rows(ps, pt, t, k):
    return (t * t / k) * sum(a * log(a / b) for a, b in zip(pt, ps))


def ce(p, y):
    return -log(p[y])


def neg_entropy(p):
    return sum(v * log(v) for v in p if v > 0)


values = {}

sm = softmax([mpf(2), mpf(0)], 2)
values["softmax_2_0_T2_0"] = sm[0]
values["softmax_2_0_T2_1"] = sm[1]

kl = kl_rows([mpf("0.5"), mpf("0.5")], [mpf("0.75"), mpf("0.25")], 2, 2)
ce_ex = ce([mpf("0.25"), mpf("0.75")], 1)
ne = neg_entropy([mpf("0.9"), mpf("0.1")])
values["kl_example"] = kl
values["ce_example"] = ce_ex
values["neg_entropy_example"] = ne
values["composite_total"] = mpf("0.25") * kl + mpf("0.75") * ce_ex + mpf("0.005") * ne

p = [mpf("0.8"), mpf("0.2")]
values["entropy_score_0.8_0.2"] = -neg_entropy(p)
values["ce_joint_3_uniform_K10"] = 3 * log(10)

# CE of softmax([0, 0]) against class 0: gradient p - onehot.
p0 = softmax([mpf(0), mpf(0)])
values["ce_grad_0"] = p0[0] - 1
values["ce_grad_1"] = p0[1]

# Adam, scalar parameter, constant gradient 1, lr 1e-3, first step.
lr, b1, b2, eps = mpf("1e-3"), mpf("0.9"), mpf("0.999"), mpf("1e-8")
m = (1 - b1) * 1
v = (1 - b2) * 1
values["adam_first_step_delta"] = -lr * (m / (1 - b1)) / ((v / (1 - b2)) ** mpf("0.5") + eps)

# Realizable two-exit ERDE case: B = 2, K = 3, w = (0.25, 0.75, 0.005), T = 2.
# Exit 1: teacher correct on row 0 and wrong on row 1; exit 2 is plain KD.
labels = [0, 2]
s1 = [[mpf("1.0"), mpf("-0.5"), mpf("0.25")], [mpf("0.3"), mpf("0.9"), mpf("-1.2")]]
t1 = [[mpf("2.0"), mpf("0.1"), mpf("-0.4")], [mpf("1.5"), mpf("0.2"), mpf("0.4")]]
s2 = [[mpf("0.2"), mpf("0.1"), mpf("-0.3")], [mpf("-0.7"), mpf("0.4"), mpf("1.1")]]
t2 = [[mpf("1.2"), mpf("-0.3"), mpf("0.6")], [mpf("-0.2"), mpf("0.0"), mpf("0.8")]]
wkl, wce, we, T, K = mpf("0.25"), mpf("0.75"), mpf("0.005"), 2, 3


def kd_row(s, t, y):
    return wkl * kl_rows(softmax(s, T), softmax(t, T), T, K) + wce * ce(softmax(s), y)


def argmax(z):
    return max(range(len(z)), key=lambda i: (z[i], -i))


exit1 = 0
for b in range(2):
    if argmax(t1[b]) == labels[b]:
        exit1 += kd_row(s1[b], t1[b], labels[b])
    else:
        exit1 += we * neg_entropy(softmax(s1[b]))
exit1 /= 2
exit2 = sum(kd_row(s2[b], t2[b], labels[b]) for b in range(2)) / 2
values["erde_two_exit_total"] = exit1 + exit2
values["kd_two_exit_total"] = (
    sum(kd_row(s1[b], t1[b], labels[b]) for b in range(2)) / 2 + exit2
)

for name, value in values.items():
    print(f"{name} = {mp.nstr(value, 17, min_fixed=-30, max_fixed=30)}")
