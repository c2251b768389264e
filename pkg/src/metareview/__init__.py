"""Structure-aware meta-review generation from peer-review conversations, in NumPy."""

from .assembly import AssembledInput, Vocab, assemble_input, build_vocab, extend_relations, tokenize
from .attention import block_sparse_attention, rsattn_head, structural_mask
from .conversation import Document, DocType, Sample, load_jsonl, parse_sample, save_jsonl, tree_stats
from .corpus import corpus_stats, detect_conflict, novel_ngram_pct, split_dataset
from .evaluation import acc_metric, evaluate_run, lcs_f1_sum, train_acc_classifier
from .heads import LossWeights
from .model import Model, ModelConfig
from .relations import RelationKind, build_all_relations, build_relation
from .training import TrainConfig, Trainer, overfit_probe

__version__ = "0.1.0"
