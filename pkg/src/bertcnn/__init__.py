"""BERT-CNN offensive language identification and its comparison baselines."""

from .corpus import DataSplit, LabeledTweet, TSVSchema, class_distribution, load_tsv, split
from .encoder import EmbeddingStack, EncoderConfig, TransformerEncoder, encode_batch, load_checkpoint
from .head import ConvHead, HeadConfig, parameter_count, predict_label
from .metrics import Confusion, EvalReport, confusion, macro_f1
from .models import BertCNN, Pipeline
from .preprocess import TokenizedExample, Vocabulary, encode, normalize_greek, segment_hashtags, wordpiece_tokenize
from .training import RunHistory, TrainConfig, train

__version__ = "0.1.0"
