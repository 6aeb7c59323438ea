#ifndef GSPPCA_GSPPCA_HPP
#define GSPPCA_GSPPCA_HPP

#include "gsppca/error.hpp"
#include "gsppca/evidence.hpp"
#include "gsppca/io.hpp"
#include "gsppca/linalg.hpp"
#include "gsppca/metrics.hpp"
#include "gsppca/parallel.hpp"
#include "gsppca/random.hpp"
#include "gsppca/selection.hpp"
#include "gsppca/simulate.hpp"
#include "gsppca/special.hpp"
#include "gsppca/vem.hpp"
#include "gsppca/version.hpp"

#endif  // GSPPCA_GSPPCA_HPP
