#pragma once

#include "spray/ablation.hpp"
#include "spray/affinity.hpp"
#include "spray/artifact.hpp"
#include "spray/attribution_map.hpp"
#include "spray/barycenter.hpp"
#include "spray/config.hpp"
#include "spray/core.hpp"
#include "spray/dataset.hpp"
#include "spray/distance_matrix.hpp"
#include "spray/fda.hpp"
#include "spray/gromov.hpp"
#include "spray/io.hpp"
#include "spray/kmeans.hpp"
#include "spray/lanczos.hpp"
#include "spray/linalg.hpp"
#include "spray/lrp.hpp"
#include "spray/measure.hpp"
#include "spray/network.hpp"
#include "spray/parallel.hpp"
#include "spray/pipeline.hpp"
#include "spray/report.hpp"
#include "spray/sinkhorn.hpp"
#include "spray/tensor.hpp"
#include "spray/tsne.hpp"
