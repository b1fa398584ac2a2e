#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <random>
#include <string>
#include <string_view>
#include <vector>

#include "potkv/error.hpp"
#include "potkv/tokenizer.hpp"

namespace potkv {

// Built-in neutral filler bank; no external data dependency.
inline const std::array<std::string_view, 100>& filler_sentences() {
    static const std::array<std::string_view, 100> bank = {
        "The morning train left the station a few minutes late.",
        "A row of poplars lined the road to the old mill.",
        "She poured the tea and set the cups on the tray.",
        "The committee postponed its decision until the spring session.",
        "Rain fell steadily over the harbor through the night.",
        "He sorted the letters into three neat piles.",
        "The museum opens at nine and closes at five.",
        "A light breeze moved the curtains in the study.",
        "The bakery on the corner sells bread until noon.",
        "Two gulls circled above the fishing boats.",
        "The lecture covered the history of canal construction.",
        "Workers repaved the road near the northern bridge.",
        "The garden needed water after a week of sun.",
        "A clock on the mantel struck the half hour.",
        "The ferry crossing takes about forty minutes.",
        "Maps of the region hung along the corridor.",
        "The orchard produced a modest crop this year.",
        "She filed the report before leaving for lunch.",
        "The choir rehearsed in the hall on Tuesday evenings.",
        "Snow settled on the rooftops before dawn.",
        "The printer in the back office needs new paper.",
        "A delivery van stopped outside the grocer's.",
        "The trail follows the river for several miles.",
        "He checked the gauge and noted the pressure.",
        "The library extended its hours during exams.",
        "Lamps along the promenade switched on at dusk.",
        "The recipe calls for two cups of flour.",
        "A small crowd gathered near the fountain.",
        "The bus route changed at the start of the month.",
        "Paint dried slowly in the damp weather.",
        "The archivist labeled each box by decade.",
        "Children played in the park until supper.",
        "The bridge was closed briefly for inspection.",
        "A kettle whistled in the next room.",
        "The firm moved its offices across town.",
        "Fields stretched flat to the horizon.",
        "The tailor measured the cloth twice.",
        "Market stalls opened early on Saturday.",
        "The stairwell smelled faintly of varnish.",
        "A courier left a parcel at the front desk.",
        "The observatory scheduled a public viewing night.",
        "Leaves collected in the gutters after the storm.",
        "The accountant balanced the ledger by hand.",
        "A tram rattled past the empty square.",
        "The warehouse stores grain through the winter.",
        "She transplanted the seedlings into larger pots.",
        "The editor returned the draft with few remarks.",
        "Fog lifted from the valley by midmorning.",
        "The janitor swept the corridor twice a day.",
        "A bell above the door announced each customer.",
        "The survey team marked the property lines.",
        "Old photographs filled the bottom drawer.",
        "The canteen serves soup from eleven onward.",
        "Wind turbines turned slowly on the ridge.",
        "The clerk stamped the forms in order.",
        "A barge moved upstream against the current.",
        "The seminar room holds about thirty people.",
        "Tiles on the roof needed replacing after the frost.",
        "The florist arranged tulips in the window.",
        "Night shifts rotate every second week.",
        "The reservoir level dropped during the dry spell.",
        "He oiled the hinges on the garden gate.",
        "The typesetter aligned the columns carefully.",
        "A vendor sold roasted chestnuts by the entrance.",
        "The committee minutes were circulated on Friday.",
        "Streetlights flickered during the power test.",
        "The nursery stocked ferns and small palms.",
        "A surveyor's tripod stood at the crossroads.",
        "The laundry line swayed between two posts.",
        "Crates of apples arrived from the valley farms.",
        "The telegraph office kept records of every message.",
        "A painter touched up the railings by the pier.",
        "The schedule lists departures on the hour.",
        "Dust gathered on the unused piano.",
        "The cooperative elected a new treasurer.",
        "Gravel crunched under the delivery cart.",
        "The lighthouse keeper logged the weather at noon.",
        "A seamstress hemmed the curtains for the hall.",
        "The quarry supplies stone for the new wing.",
        "Ice formed along the edges of the pond.",
        "The stationer restocked ink and ribbon.",
        "A porter wheeled luggage across the platform.",
        "The almanac predicts a mild autumn.",
        "Bees worked the clover behind the barn.",
        "The binder pressed the pages flat overnight.",
        "A drawbridge lifted for the tall-masted ship.",
        "The pharmacist weighed the powder precisely.",
        "Swallows nested under the station eaves.",
        "The foreman reviewed the shift roster.",
        "A milk cart made its rounds before six.",
        "The atlas fell open to a map of the coast.",
        "Carpenters framed the shed in a single day.",
        "The toll keeper counted coins into the till.",
        "A weather vane turned above the courthouse.",
        "The orchard keeper pruned the lower branches.",
        "Lanterns hung from hooks along the towpath.",
        "The miller bagged flour for the morning run.",
        "A stone wall borders the lower pasture.",
        "The watchmaker adjusted the tiny escapement.",
    };
    return bank;
}

struct NihSpec {
    long long haystack_len = 1024;  // context token count
    double depth = 0.5;             // in [0, 1]
    std::string passkey = "48215";
    std::uint64_t filler_seed = 0;
    std::string query_text = "What is the secret passkey?";

    void validate() const {
        if (haystack_len < 8) throw ConfigError("nih.haystack_len: must be >= 8");
        if (depth < 0.0 || depth > 1.0) throw ConfigError("nih.depth: must lie in [0, 1]");
        if (passkey.empty()) throw ConfigError("nih.passkey: must be non-empty");
    }
};

struct NihData {
    std::vector<int> context_tokens;  // exactly haystack_len ids, no BOS
    std::string query_text;
    std::string expected;             // the passkey digit string
    long long passkey_begin = 0;      // token span of the passkey sentence
    long long passkey_end = 0;        // exclusive
};

// Deterministic haystack: seeded filler sentences with the passkey sentence
// inserted at the boundary nearest round(depth * haystack_len).
inline NihData gen_nih(const NihSpec& spec) {
    spec.validate();
    NihData out;
    out.query_text = spec.query_text;
    out.expected = spec.passkey;

    const std::string needle = "The secret passkey is " + spec.passkey + ". ";
    const long long filler_target = spec.haystack_len - static_cast<long long>(needle.size());
    if (filler_target < 0) throw ConfigError("nih.haystack_len: too short for the passkey sentence");

    const auto& bank = filler_sentences();
    std::mt19937_64 rng(spec.filler_seed);
    std::string filler;
    std::vector<long long> boundaries{0};
    while (static_cast<long long>(filler.size()) < filler_target) {
        filler += bank[static_cast<std::size_t>(rng() % bank.size())];
        filler += ' ';
        boundaries.push_back(static_cast<long long>(filler.size()));
    }
    filler.resize(static_cast<std::size_t>(filler_target));

    const long long want = std::llround(spec.depth * static_cast<double>(spec.haystack_len));
    long long insert_at = 0;
    long long best_dist = -1;
    for (long long b : boundaries) {
        if (b > filler_target) break;
        const long long dist = b > want ? b - want : want - b;
        if (best_dist < 0 || dist < best_dist) {
            best_dist = dist;
            insert_at = b;
        }
    }

    std::string text = filler.substr(0, static_cast<std::size_t>(insert_at)) + needle +
                       filler.substr(static_cast<std::size_t>(insert_at));
    out.context_tokens = encode_bytes(text);
    out.passkey_begin = insert_at;
    out.passkey_end = insert_at + static_cast<long long>(needle.size());
    return out;
}

}  // namespace potkv
