#include "netslic/networks.hpp"

#include <numbers>

#include "netslic/errors.hpp"
#include "netslic/synthgen.hpp"

namespace netslic {

namespace {

BranchSpec line(BusId f, BusId t, double r, double x, double b, bool monitored = true) {
    BranchSpec s;
    s.id = {f, t};
    s.params = {r, x, b};
    s.monitored = monitored;
    return s;
}

BusSpec bus(BusId id, double re, double im) {
    BusSpec b;
    b.id = id;
    b.injection = {re, im};
    return b;
}

}  // namespace

NetworkSpec builtin_network() {
    NetworkSpec net;
    net.name = "ehv-10";
    net.base_mva = 100.0;
    net.base_kv = 345.0;

    // The 345 kV layer of the IEEE 118-bus case (line 68-116 left out) with the
    // lower-voltage system lumped behind its transformer buses. Line charging
    // is split evenly between the two ends.
    for (BusId id : {8, 9, 10, 26, 30, 38, 63, 64, 65, 68, 81, 5, 17, 25, 37, 59, 61, 66, 80, 69})
        net.buses.push_back(bus(id, 0.0, 0.0));
    net.buses.back().slack = true;

    net.branches = {
        line(8, 30, 0.00431, 0.0504, 0.514 / 2),
        line(8, 9, 0.00244, 0.0305, 1.162 / 2),
        line(9, 10, 0.00258, 0.0322, 1.230 / 2),
        line(26, 30, 0.00799, 0.0860, 0.908 / 2),
        line(30, 38, 0.00464, 0.0540, 0.422 / 2),
        line(38, 65, 0.00901, 0.0986, 1.046 / 2),
        line(64, 65, 0.00269, 0.0302, 0.380 / 2),
        line(63, 64, 0.00172, 0.0200, 0.216 / 2),
        line(65, 68, 0.00138, 0.0160, 0.638 / 2),
        line(68, 81, 0.00175, 0.0202, 0.808 / 2),
        // Transformer ties and the lumped lower-voltage system.
        line(8, 5, 0.0, 0.0267, 0.0, false),
        line(30, 17, 0.0, 0.0388, 0.0, false),
        line(26, 25, 0.0, 0.0382, 0.0, false),
        line(38, 37, 0.0, 0.0375, 0.0, false),
        line(63, 59, 0.0, 0.0386, 0.0, false),
        line(64, 61, 0.0, 0.0268, 0.0, false),
        line(65, 66, 0.0, 0.0370, 0.0, false),
        line(68, 69, 0.0, 0.0370, 0.0, false),
        line(81, 80, 0.0, 0.0370, 0.0, false),
        line(5, 17, 0.0120, 0.0800, 0.020, false),
        line(17, 25, 0.0250, 0.2000, 0.020, false),
        line(17, 37, 0.0150, 0.1000, 0.030, false),
        line(37, 59, 0.0200, 0.1500, 0.040, false),
        line(59, 61, 0.0100, 0.0700, 0.020, false),
        line(61, 66, 0.0100, 0.0800, 0.020, false),
        line(66, 69, 0.0080, 0.0600, 0.020, false),
        line(69, 80, 0.0100, 0.0800, 0.030, false),
    };
    net.rqm_branch = {30, 38};
    net.rqm_end = 30;

    // Base-case voltage profile with every monitored line near 3 p.u.; bus 9
    // carries no load, so its voltage follows from its neighbours.
    const auto v = [](double mag, double deg) { return std::polar(mag, deg * std::numbers::pi / 180.0); };
    balance_injections(net, {
        {30, v(0.990, 0.0)},   {8, v(1.015, 8.7)},   {10, v(1.050, 19.4)}, {26, v(1.015, 14.8)},
        {38, v(0.970, -9.3)},  {65, v(1.005, 7.7)},  {64, v(0.985, 2.5)},  {63, v(0.970, -0.9)},
        {68, v(1.005, 10.45)}, {81, v(0.997, 13.95)}, {5, v(1.000, 4.7)},  {17, v(0.985, -4.4)},
        {25, v(1.040, 18.1)},  {37, v(0.975, -13.6)}, {59, v(0.975, -5.3)}, {61, v(0.990, -0.6)},
        {66, v(1.040, 11.9)},  {80, v(1.035, 18.15)}, {69, v(1.035, 14.65)},
    });
    return net;
}

NetworkSpec chain_network(int lines, bool loaded_interior) {
    if (lines < 1) throw InputError("chain needs at least one line");
    NetworkSpec net;
    net.name = "chain-" + std::to_string(lines);
    const BusId slack = lines + 2;
    for (BusId k = 1; k <= lines + 1; ++k) {
        const bool interior = k > 1 && k <= lines;
        if (interior && !loaded_interior) {
            net.buses.push_back(bus(k, 0.0, 0.0));
        } else {
            net.buses.push_back(k % 2 == 0 ? bus(k, -0.40 - 0.02 * k, 0.12) : bus(k, 0.30 + 0.01 * k, -0.05));
        }
    }
    net.buses.push_back(bus(slack, 0.0, 0.0));
    net.buses.back().slack = true;

    for (BusId k = 1; k <= lines; ++k)
        net.branches.push_back(line(k, k + 1, 0.0040 + 0.0005 * k, 0.040 + 0.004 * k, 0.030 + 0.002 * k));
    net.branches.push_back(line(1, slack, 0.0050, 0.0500, 0.0150, false));
    net.branches.push_back(line(lines + 1, slack, 0.0060, 0.0550, 0.0150, false));
    if (loaded_interior)
        for (BusId k = 2; k <= lines; ++k)
            net.branches.push_back(line(k, slack, 0.0120, 0.1000, 0.0100, false));
    net.rqm_branch = {1, 2};
    net.rqm_end = 1;
    return net;
}

}  // namespace netslic
