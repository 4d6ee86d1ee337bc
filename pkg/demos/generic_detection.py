"""Generic knowledge: find and label walls, ground, panels and the counter without priors."""

from kbdetect.knowledge import builtin_vocabulary
from kbdetect.pipeline import evaluate_against_truth, run_generic
from kbdetect.evaluation import format_table
from kbdetect.scenegen import default_scene_spec, generate_scene

cloud, truth = generate_scene(default_scene_spec())
report = run_generic(cloud, builtin_vocabulary())
print(f"{len(cloud)} points, {report.iterations} iterations")
for e in report.elements:
    c = e.box.center
    print(f"  {e.id:6s} {e.class_label or '-':13s} {e.qualification:9s} "
          f"center=({c[0]:.2f}, {c[1]:.2f}, {c[2]:.2f}) height={e.box.height():.2f}")
print(format_table(evaluate_against_truth(report, truth)))
