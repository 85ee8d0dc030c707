#pragma once

#include "quickqual/backbone.hpp"
#include "quickqual/blob_io.hpp"
#include "quickqual/dataset_io.hpp"
#include "quickqual/error.hpp"
#include "quickqual/head_io.hpp"
#include "quickqual/heads.hpp"
#include "quickqual/image_io.hpp"
#include "quickqual/imageproc.hpp"
#include "quickqual/matrix.hpp"
#include "quickqual/metrics.hpp"
#include "quickqual/random.hpp"
#include "quickqual/training/binary_head.hpp"
#include "quickqual/training/dataset.hpp"
#include "quickqual/training/logistic.hpp"
#include "quickqual/training/selection.hpp"
#include "quickqual/training/smo.hpp"
#include "quickqual/training/svm.hpp"
