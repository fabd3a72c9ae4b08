from importlib import import_module

from ._version import __version__

# Set classes to be available directly
global_classes = ["jointgraph.solver.JointSolver",
                  "jointgraph.solver.SolverConfig",
                  "jointgraph.graph.GraphConfig",
                  "jointgraph.baselines.SymNMF",
                  "jointgraph.baselines.KMeans",
                  "jointgraph.datasets.Dataset",
                  "jointgraph.experiment.Experiment",
                  "jointgraph.experiment.ExperimentSpec"]

for c in global_classes:

    module_name = ".".join(c.split(".")[:-1])
    attribute_name = c.split(".")[-1]

    module = import_module(module_name)
    attribute = getattr(module, attribute_name)

    globals()[attribute_name] = attribute
