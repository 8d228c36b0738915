/* Compiled as C to keep the public header C-clean. */
#include <vpfa/vpfa.h>

size_t vpfa_c_header_check(void) {
  vpfa_synth_config c = vpfa_synth_config_default();
  return c.dim + vpfa_parameter_count(4, 3);
}
