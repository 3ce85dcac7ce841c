#pragma once

#include "evhta/error.hpp"
#include "evhta/event_io.hpp"
#include "evhta/fhtf.hpp"
#include "evhta/fhtf_checks.hpp"
#include "evhta/frame_io.hpp"
#include "evhta/hash.hpp"
#include "evhta/hta.hpp"
#include "evhta/image.hpp"
#include "evhta/oracle.hpp"
#include "evhta/params.hpp"
#include "evhta/synth.hpp"
#include "evhta/types.hpp"
#include "evhta/window.hpp"

namespace evhta {
inline constexpr const char* kVersion = "0.1.0";
}
