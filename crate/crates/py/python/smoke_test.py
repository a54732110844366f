"""Smoke test for the `lovme` extension module.

Build with `cargo build -p lovme-py --release`, copy
`target/release/liblovme.so` to `lovme.so` somewhere on PYTHONPATH, then run
this script.
"""

import math
import os
import tempfile

import lovme

features, labels, noised = lovme.synth_blobs(200, 3, noise_sigma=0.6, label_noise_rate=0.05, seed=1)
assert len(features) == 200 and len(labels) == 200

net = lovme.train(features, labels, hidden_widths=[6], epochs=5, seed=2)
assert net.units == 6 and net.class_count == 3 and net.input_dim == len(features[0])
print(net)

x, y = features[0], labels[0]
probs = net.predict(x)
assert abs(sum(probs) - 1.0) < 1e-12
assert net.loss(x, y) >= 0.0
assert math.isclose(net.loss(x, y, mask=[True] * 6), net.loss(x, y))

with tempfile.TemporaryDirectory() as tmp:
    path = os.path.join(tmp, "w.tnlw")
    net.save(path)
    assert lovme.Network.load(path).predict(x) == probs
assert lovme.Network.from_json(net.to_json()).predict(x) == probs

exact = lovme.enumerate(net, x, y, beta=1.0, eta=0.1)
chain = lovme.run_chain(net, x, y, beta=1.0, eta=0.1, transitions=40000, burn_in=1000, thin=3, seed=5)
mean = chain["report"]["mean_loss"]
assert abs(mean - exact["mean_loss"]) / exact["mean_loss"] < 0.05, (mean, exact["mean_loss"])
assert len(chain["losses"]) == len(chain["sizes"])

mc = lovme.mc_dropout(net, x, y, p=0.5, draws=500, seed=3)
assert mc["report"]["var_loss"] >= 0.0

scores = [0.1, 0.4, 0.35, 0.8]
truth = [False, False, True, True]
assert lovme.roc_auc(scores, truth) == 0.75
opt, pes = lovme.band_auc(scores, truth, [0.1, 0.1, 0.1, 0.1])
assert pes <= 0.75 <= opt
auc, kept = lovme.rejection_auc(scores, truth, [0.0, 0.9, 0.0, 0.0], 0.25)
assert auc == 1.0 and kept == 0.75

try:
    lovme.run_chain(net, x, y, kernel="nope")
except ValueError:
    pass
else:
    raise AssertionError("bad kernel accepted")

try:
    lovme.Network.load("/nonexistent/weights")
except lovme.LovmeError:
    pass
else:
    raise AssertionError("missing file accepted")

print("smoke test passed")
