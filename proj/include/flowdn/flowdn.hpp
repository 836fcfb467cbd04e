// Umbrella include for the whole library.
#pragma once

#include "flowdn/checkpoint.hpp"
#include "flowdn/csv.hpp"
#include "flowdn/datasets.hpp"
#include "flowdn/fft.hpp"
#include "flowdn/harness.hpp"
#include "flowdn/metrics.hpp"
#include "flowdn/models.hpp"
#include "flowdn/objectives.hpp"
#include "flowdn/optim.hpp"
#include "flowdn/oracle.hpp"
#include "flowdn/rng.hpp"
#include "flowdn/sampler.hpp"
#include "flowdn/serialize.hpp"
#include "flowdn/svg.hpp"
#include "flowdn/tape.hpp"
#include "flowdn/tensor.hpp"
