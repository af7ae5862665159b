# Copyright 2026 The mfs Authors
# SPDX-License-Identifier: Apache-2.0
"""Latency-constrained segmentation search, distillation and metrics."""

from ._core import (
    Dataset,
    LatencyTable,
    NetworkSpec,
    ParameterStore,
    SearchResult,
    SearchSpaceConfig,
    TrainConfig,
    benchmark_table,
    cityscapes_train_id,
    conv_flops,
    conv_params,
    distill_student,
    evaluate,
    generate_synthetic,
    gumbel_sample,
    load_cityscapes,
    network_flops,
    network_latency,
    network_params,
    predict,
    regularized_latency,
    search,
    segmentation_metrics,
    temperature_softmax,
    train_student,
    train_teacher,
)

__version__ = "0.1.0"

__all__ = [name for name in dir() if not name.startswith("_")]
