"""Ego-anchored subgraph templates for node classification.

The pipeline: match small anchored templates into every node's
neighborhood, partition the matched nodes by the template's anchor-fixing
automorphism orbits, aggregate features per orbit with learnable weights,
fuse template channels with a squeeze-and-excitation gate, and optionally
search the template set with a genetic loop that reuses matching work
across mutations.
"""

from .graph_core import (Graph, Split, dummy_features, load_edge_list,
                         load_features, load_labels, load_split, make_split,
                         random_features, save_edge_list, save_split)
from .templates import (AnchoredTemplate, canonical_form, canonicalize,
                        catalogue, load_templates, parse_template,
                        save_templates, template_by_name)
from .orbits import OrbitPartition, ego_automorphisms, orbit_partition
from .matcher import (EgoAeIndex, MatchCounters, build_index,
                      extend_node_mutation, filter_edge_mutation,
                      match_stats, match_template)
from .model import (Adam, DivergenceError, ForwardTrace, GrapeModel,
                    ModelConfig, MpnnModel, NumericError, TrainReport,
                    accuracy, aggregate_ae, forward, fuse, hyperparameter_grid,
                    load_checkpoint, loss_and_gradients, mpnn_forward,
                    save_checkpoint, se_weights, train, train_mpnn)
from .genetic import (Gene, GenePool, MatchCache, SearchConfig, SearchResult,
                      crossover, evaluate, init_pool, mutate, search, select)

__version__ = "0.1.0"
