#pragma once

// cpp-httplib pulls in <resolv.h>, whose `_res` macro breaks Eigen's product
// kernels. Eigen goes first and the macro is dropped afterwards.

#include <Eigen/Dense>

#include <httplib.h>

#ifdef _res
#undef _res
#endif
