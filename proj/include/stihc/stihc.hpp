#pragma once

#include "stihc/error.hpp"
#include "stihc/expression.hpp"
#include "stihc/family.hpp"
#include "stihc/fem.hpp"
#include "stihc/ihc.hpp"
#include "stihc/io.hpp"
#include "stihc/mesh.hpp"
#include "stihc/metrics.hpp"
#include "stihc/parallel.hpp"
#include "stihc/pipeline.hpp"
#include "stihc/render.hpp"
#include "stihc/rng.hpp"
#include "stihc/solver.hpp"
#include "stihc/supernodal.hpp"
#include "stihc/synth.hpp"

namespace stihc {
inline constexpr const char* version = "1.0.0";
}
