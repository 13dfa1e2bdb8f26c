"""Flow-CSV ingestion, cleaning and the model-ready Dataset."""
from .dataset import Dataset, read_dataset, write_dataset
from .pipeline import PreprocessResult, StageError, clean_table, run_preprocess
from .preprocess import (DEFAULT_FEATURES, REFERENCE_ROW_COUNT, MinMaxScaler, correlation_matrix,
                         drop_duplicates, label_binarize, minmax_scale, pareto_summary,
                         pearson_matrix, prune_correlated, sanitize_nulls, select_features,
                         stratified_split)
from .synth import SynthSpec, bayes_error, synth_generate, write_flow_csv
from .table import FlowRecord, PreprocessReport, RawTable, load_flow_csv, merge_tables


def train_test_split(dataset: Dataset, train_fraction: float = 0.8, seed: int = 0):
    """Stratified (train, test) partitions of a labelled Dataset."""
    tr, te = stratified_split(dataset.y, train_fraction, seed)
    return dataset.subset(tr), dataset.subset(te)
