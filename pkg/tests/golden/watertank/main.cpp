#include <systemc.h>
#include "WTS.h"

int sc_main(int argc, char* argv[]) {
    WTS top("top");
    sc_start(10000, SC_MS);
    return 0;
}
