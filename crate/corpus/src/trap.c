/* Jumps to a misaligned address; the run must end with a trap. */
#include "pico.h"

int main(void) {
    write(1, "about to trap\n", 14);
    void (*f)(void) = (void (*)(void))0x10002;
    f();
    return 0;
}
