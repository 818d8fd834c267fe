"""Ancestral sampling with the latent variables kept visible.

A draw happens in three steps: a base point z ~ N(0, I), a component label
r drawn from the classifier's weights *evaluated at z*, and the output
x = mu_r + sigma_r * z. Because the label depends on the base point, the
same component can be chosen with high probability in one region of the
base space and never in another -- that is what makes the mixture weights
input-dependent. This script builds a small model by hand and inspects the
traces.

Run:  python3 demos/03_sampling_latents.py
"""

import numpy as np

from cwm.classifier import MlpClassifier
from cwm.components import DiagGaussianComponent
from cwm.model import CwmModel
from cwm.rng import RngHandle

# two components: a tight blob left of the origin, a wide one to the right
components = [
    DiagGaussianComponent(np.array([-2.0, 0.0]), np.log([0.25, 0.25])),
    DiagGaussianComponent(np.array([2.0, 0.0]), np.log([1.0, 1.0])),
]

# a linear classifier on the base point: prefer component 0 when z0 < 0
clf = MlpClassifier(
    weights=[np.array([[-3.0, 3.0], [0.0, 0.0]])],
    biases=[np.zeros(2)],
)
model = CwmModel(components, clf)

rng = RngHandle(7)
traces = model.sample(rng, 5)
print("five draws (z -> r -> x):")
for t in traces:
    print(f"  z = ({t.z[0]:+.3f}, {t.z[1]:+.3f})  r = {t.r}  "
          f"x = ({t.x[0]:+.3f}, {t.x[1]:+.3f})")
    np.testing.assert_allclose(t.x, model.components[t.r].inverse(t.z), atol=0)

# label frequencies respond to where the base point lands
Z, R, X = model.sample_arrays(RngHandle(8), 50_000)
left = Z[:, 0] < 0
print(f"\nP(r = 0 | z0 < 0) ~= {np.mean(R[left] == 0):.3f}")
print(f"P(r = 0 | z0 > 0) ~= {np.mean(R[~left] == 0):.3f}")
print(f"overall component usage: {np.bincount(R, minlength=2) / R.size}")

# the density that sampling procedure implies, checked by simple binning
lp = model.log_prob_batch(X[:1000])
print(f"\nmean log density of 1000 of its own samples: {lp.mean():.4f}")

# responsibilities invert the generative story: given x, which component?
x_probe = np.array([-2.0, 0.0])
post = model.responsibilities(x_probe)
print(f"responsibilities at {x_probe}: {np.round(post, 4)}")
