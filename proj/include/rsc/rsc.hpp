#pragma once

#include "rsc/archive.hpp"
#include "rsc/dataset.hpp"
#include "rsc/error.hpp"
#include "rsc/experiments.hpp"
#include "rsc/gradcheck.hpp"
#include "rsc/image.hpp"
#include "rsc/labels.hpp"
#include "rsc/layers.hpp"
#include "rsc/loss.hpp"
#include "rsc/metrics.hpp"
#include "rsc/network.hpp"
#include "rsc/parallel.hpp"
#include "rsc/profile.hpp"
#include "rsc/rng.hpp"
#include "rsc/synthetic.hpp"
#include "rsc/tensor.hpp"
#include "rsc/training.hpp"
#include "rsc/transfer.hpp"
