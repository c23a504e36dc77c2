#pragma once

#include "cfdiff/adapt.hpp"
#include "cfdiff/counterfactual.hpp"
#include "cfdiff/dataset.hpp"
#include "cfdiff/diff.hpp"
#include "cfdiff/error.hpp"
#include "cfdiff/interest.hpp"
#include "cfdiff/io.hpp"
#include "cfdiff/linalg.hpp"
#include "cfdiff/model.hpp"
#include "cfdiff/optimize.hpp"
#include "cfdiff/persistence.hpp"
#include "cfdiff/random.hpp"
#include "cfdiff/theory.hpp"
#include "cfdiff/train.hpp"
