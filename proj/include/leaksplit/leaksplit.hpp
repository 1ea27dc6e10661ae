#ifndef LEAKSPLIT_LEAKSPLIT_HPP
#define LEAKSPLIT_LEAKSPLIT_HPP

/**
 * @file leaksplit.hpp
 *
 * @brief Umbrella header for leakage-aware dataset splitting of video frames.
 */

#include "corpus.hpp"
#include "descriptors.hpp"
#include "hash.hpp"
#include "hdbscan.hpp"
#include "knn.hpp"
#include "matrix.hpp"
#include "matrix_io.hpp"
#include "metrics.hpp"
#include "pacmap.hpp"
#include "pca.hpp"
#include "pipeline.hpp"
#include "random.hpp"
#include "splitter.hpp"
#include "vlad.hpp"

#endif
