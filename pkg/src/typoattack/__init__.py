"""Gradient-guided keyboard-typo attacks on multilabel CNN text classifiers."""

from .attack import (AttackConfig, AttackStep, AttackTrace, attack_corpus, attack_document,
                     best_typo, perturbation_budget_check, score_document, select_position)
from .corpus import (Document, LabelSpace, RawRecord, SplitSpec, Vocabulary, build_label_space,
                     build_vocabulary, filter_and_encode, merge_by_patient, split, tokenize)
from .metrics import EvalReport, auc_scores, evaluate, f1_scores, precision_at_k, sweep_table
from .nn import (Classifier, ModelConfig, ModelParams, OptimizerConfig, backward_input, backward_params,
                 forward, init_params, load_checkpoint, loss, predict, save_checkpoint, train)
from .typo import KeyboardMap, count_candidates, default_keyboard, generate_candidates

__version__ = "0.1.0"
