// meshdeform.hpp — convenience umbrella for the whole library.
#pragma once

#include "meshdeform/camera.hpp"
#include "meshdeform/checkpoint.hpp"
#include "meshdeform/dataset.hpp"
#include "meshdeform/features.hpp"
#include "meshdeform/gcn.hpp"
#include "meshdeform/geometry.hpp"
#include "meshdeform/hungarian.hpp"
#include "meshdeform/io.hpp"
#include "meshdeform/kdtree.hpp"
#include "meshdeform/losses.hpp"
#include "meshdeform/mesh.hpp"
#include "meshdeform/metrics.hpp"
#include "meshdeform/optimizer.hpp"
#include "meshdeform/pipeline.hpp"
#include "meshdeform/pipeline_runconfig.hpp"
#include "meshdeform/png_io.hpp"
#include "meshdeform/rng.hpp"
#include "meshdeform/tensor.hpp"
