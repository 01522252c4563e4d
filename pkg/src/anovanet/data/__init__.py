"""Benchmark generators and tabular dataset ingestion."""

from anovanet.data.dataset import (
    TEST,
    TRAIN,
    VAL,
    Dataset,
    TestFunctionSpec,
    generate,
    ingest_csv,
    load_dataset,
    save_dataset,
    split,
)
from anovanet.data.testfn import ishigami, ishigami_variances, otl_circuit, piston

__all__ = [
    "TEST", "TRAIN", "VAL", "Dataset", "TestFunctionSpec", "generate", "ingest_csv",
    "load_dataset", "save_dataset", "split", "ishigami", "ishigami_variances",
    "otl_circuit", "piston",
]
