// The 3x3 observation panel.
//
// The agent sits in the center cell; the eight neighbor cells light up from
// the observation bit-string. Bit i (1-based, string index i-1) maps to a
// panel cell as [row, column] with row 0 at the top:
//
//   bit 1 down-left  -> [2, 0]    bit 5 up-right  -> [0, 2]
//   bit 2 left       -> [1, 0]    bit 6 right     -> [1, 2]
//   bit 3 up-left    -> [0, 0]    bit 7 down-right-> [2, 2]
//   bit 4 up         -> [0, 1]    bit 8 down      -> [2, 1]
//
// This table is the published bit-to-cell mapping; tests and docs use it.

export const BIT_TO_CELL: ReadonlyArray<readonly [number, number]> = [
  [2, 0],
  [1, 0],
  [0, 0],
  [0, 1],
  [0, 2],
  [1, 2],
  [2, 2],
  [2, 1],
];

export interface PanelCell {
  occupied: boolean;
  agent: boolean;
}

export function panelCells(obs: string): PanelCell[][] {
  const grid: PanelCell[][] = Array.from({ length: 3 }, () =>
    Array.from({ length: 3 }, () => ({ occupied: false, agent: false })),
  );
  const center = grid[1]?.[1];
  if (center) center.agent = true;
  for (let i = 0; i < Math.min(obs.length, 8); i += 1) {
    if (obs[i] !== "1") continue;
    const cell = BIT_TO_CELL[i];
    if (!cell) continue;
    const [row, col] = cell;
    const target = grid[row]?.[col];
    if (target) target.occupied = true;
  }
  return grid;
}
