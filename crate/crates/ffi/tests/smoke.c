#include <stdio.h>
#include <string.h>
#include "clubsim.h"

static const char *JSON =
    "{\"goods\": 2, \"phi0\": 0, \"classes\": [{\"n\": 100, \"demand\": [1, 0],"
    " \"supply\": [1, 0], \"kbar\": 1,"
    " \"incentive\": {\"kind\": \"constant\", \"rho0\": 0.015}}]}";

int main(void) {
    ClubsimScenario *sc = NULL;
    ClubsimSolution *sol = NULL;
    ClubsimViability v;
    if (clubsim_scenario_from_json(JSON, &sc) != CLUBSIM_STATUS_OK) {
        fprintf(stderr, "parse: %s\n", clubsim_last_error());
        return 1;
    }
    if (clubsim_solve(sc, 0.0, 0, &sol) != CLUBSIM_STATUS_OK) {
        fprintf(stderr, "solve: %s\n", clubsim_last_error());
        return 1;
    }
    if (clubsim_viability(sc, &v) != CLUBSIM_STATUS_OK) {
        return 1;
    }
    printf("total=%.4f stable=%d sufficient=%d\n", clubsim_solution_total(sol),
           clubsim_solution_stable(sol), v.sufficient_holds);
    if (clubsim_scenario_from_json("{", &sc) != CLUBSIM_STATUS_INVALID_INPUT || sc != NULL) {
        return 1;
    }
    printf("error=%s\n", strlen(clubsim_last_error()) > 0 ? "set" : "empty");
    clubsim_solution_free(sol);
    clubsim_scenario_free(sc);
    return 0;
}
