#pragma once

#include "aflstm/autograd.hpp"
#include "aflstm/checkpoint.hpp"
#include "aflstm/data.hpp"
#include "aflstm/errors.hpp"
#include "aflstm/gradcheck.hpp"
#include "aflstm/holo.hpp"
#include "aflstm/hrr.hpp"
#include "aflstm/model.hpp"
#include "aflstm/tensor.hpp"
#include "aflstm/training.hpp"
