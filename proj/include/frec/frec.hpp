#pragma once

#include "frec/adam.hpp"
#include "frec/checkpoint.hpp"
#include "frec/error.hpp"
#include "frec/gradcheck.hpp"
#include "frec/ingest.hpp"
#include "frec/metadata.hpp"
#include "frec/ops.hpp"
#include "frec/params.hpp"
#include "frec/relattn.hpp"
#include "frec/rng.hpp"
#include "frec/tensor.hpp"
#include "frec/towers.hpp"
#include "frec/trainer.hpp"
