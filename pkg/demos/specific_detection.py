"""Specific knowledge: search around prior positions, one of which is far off and one stale."""

from kbdetect.pipeline import run_specific
from kbdetect.scenegen import default_scene_spec, generate_scene, priors_from_truth

spec = default_scene_spec()
_, truth = generate_scene(spec)
# the scan no longer contains the north wall, and the south wall prior is 1.5 m off
cloud, _ = generate_scene(spec.without("wall_north"))
priors = priors_from_truth(truth, {"wall_south": (0.0, -1.5)})
report = run_specific(cloud, priors)
for name, s in report.searches.items():
    print(f"  {name:11s} found={s['found']!s:5s} enlargements={s['enlargements']}")
print("not found:", report.not_found)
