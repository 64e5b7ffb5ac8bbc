#pragma once

#include <httplib.h>

// <resolv.h>, pulled in by httplib, defines _res as a macro. Eigen uses _res
// as a parameter name, so drop the macro; httplib does not use it.
#ifdef _res
#undef _res
#endif
