#ifndef DHCSP_HELPERS_H
#define DHCSP_HELPERS_H

#include <systemc.h>
#include <cmath>
#include <cstdint>
#include <utility>
#include <vector>

// A double that remembers its past values, for delayed references.
class hvar {
public:
    explicit hvar(double v = 0.0) { hist.push_back(std::make_pair(0.0, v)); }
    operator double() const { return hist.back().second; }
    hvar& operator=(double v) {
        double t = sc_time_stamp().to_seconds();
        hist.push_back(std::make_pair(t, v));
        return *this;
    }
    // value at time now - d; before the first record the latest value at that time
    double before(double d) const {
        double s = sc_time_stamp().to_seconds() - d;
        if (s < hist.front().first) s = hist.front().first;
        double v = hist.front().second;
        for (size_t i = 0; i < hist.size() && hist[i].first <= s + 1e-12; ++i) v = hist[i].second;
        return v;
    }
private:
    std::vector<std::pair<double, double> > hist;
};

// Fixed-delay view of an hvar.
class delayed_ref {
public:
    delayed_ref(const hvar& v, double d) : var(&v), delay(d) {}
    operator double() const { return var->before(delay); }
private:
    const hvar* var;
    double delay;
};

// Array element standing for a readiness signal.
class sigref {
public:
    explicit sigref(sc_signal<bool>& s) : sig(&s) {}
    sigref& operator=(int v) { sig->write(v != 0); return *this; }
    operator bool() const { return sig->read(); }
    bool operator==(int v) const { return sig->read() == (v != 0); }
    const sc_event& posedge_event() const { return sig->posedge_event(); }
private:
    sc_signal<bool>* sig;
};

// Seedable replacement for rand() inside the module.
class choice_source {
public:
    explicit choice_source(uint64_t seed) : state(seed * 2862933555777941757ULL + 3037000493ULL) {}
    int next() {
        state = state * 6364136223846793005ULL + 1442695040888963407ULL;
        return static_cast<int>((state >> 33) & 0x7fffffff);
    }
private:
    uint64_t state;
};

#endif
