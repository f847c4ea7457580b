#pragma once

#include "fsprp/analyzer.hpp"
#include "fsprp/backend.hpp"
#include "fsprp/config.hpp"
#include "fsprp/dense_neighbors.hpp"
#include "fsprp/embedding_client.hpp"
#include "fsprp/error.hpp"
#include "fsprp/evaluation.hpp"
#include "fsprp/http_backend.hpp"
#include "fsprp/icl_examples.hpp"
#include "fsprp/oracle_backend.hpp"
#include "fsprp/pipeline.hpp"
#include "fsprp/prompt.hpp"
#include "fsprp/reranker.hpp"
#include "fsprp/sparse_index.hpp"
#include "fsprp/trec_io.hpp"
#include "fsprp/types.hpp"
