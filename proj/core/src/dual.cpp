#include "vitsi/dual.hpp"

#include "vitsi/errors.hpp"

namespace vitsi::detail {

void throw_domain(const char* what) { throw DomainError(what); }

}  // namespace vitsi::detail
